//! Indexed real series and tail-limit extrapolation.
//!
//! Diagnostic quantities are limits (`n → ∞`, or `N → ∞` along a truncation
//! ladder) observed through finitely many samples. Tails are fitted with
//!
//! ```text
//! s(n) ≈ L + C n^{-p} + D n^{-p-1} [+ E n^{-p-2}]          (power law)
//! s(n) ≈ L + C n^{-p} + D n^{-p-1} + E n^{-1} + F n^{-1} ln n   (Cesàro)
//! s(n) ≈ L + C r^n                                      (geometric)
//! ```
//!
//! with the exponent found by a grid scan refined by golden-section search
//! and the linear coefficients by least squares. The model with the smaller
//! residual wins.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Real series indexed by consecutive integers starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub start: usize,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(start: usize, values: Vec<f64>) -> Self {
        Self { start, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at index `n`, if stored.
    pub fn get(&self, n: usize) -> Option<f64> {
        n.checked_sub(self.start).and_then(|i| self.values.get(i).copied())
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn last_index(&self) -> Option<usize> {
        (!self.values.is_empty()).then(|| self.start + self.values.len() - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| (self.start + i, v))
    }

    /// Largest increase between consecutive entries (`0` for monotone
    /// nonincreasing series).
    pub fn max_increase(&self) -> f64 {
        self.values.windows(2).fold(0.0, |acc, w| acc.max(w[1] - w[0]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    PowerLaw,
    /// Power law plus `n^{-1}` and `n^{-1} ln n` terms, as produced by
    /// averaging a power-law sequence.
    Cesaro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Every sample is (numerically) zero.
    Zero,
    /// Too few points for a fit; the last sample is reported.
    LastValue,
    /// Exact three-point fit of `L + C n^{-p}`.
    ThreePoint,
    PowerLaw,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub limit: f64,
    /// Decay exponent `p` (power law) or rate `−ln r` (geometric).
    pub exponent: f64,
    /// Root-mean-square fit residual relative to the largest sample.
    pub residual: f64,
    pub points: usize,
    pub method: FitMethod,
}

const SAMPLE_POINTS: usize = 64;
const WINDOW: f64 = 16.0;

/// Estimates `lim s(n)` from the tail of a series: log-spaced samples over
/// `[n_last/16, n_last]`.
pub fn series_limit(series: &Series, model: TailModel) -> LimitEstimate {
    let Some(last) = series.last_index() else {
        return LimitEstimate {
            limit: 0.0,
            exponent: 0.0,
            residual: 0.0,
            points: 0,
            method: FitMethod::Zero,
        };
    };
    let first = ((last as f64 / WINDOW).floor() as usize).max(series.start).max(1);
    let mut idx: Vec<usize> = if last <= first {
        vec![last]
    } else {
        let (lo, hi) = ((first as f64).ln(), (last as f64).ln());
        (0..SAMPLE_POINTS)
            .map(|i| (lo + (hi - lo) * i as f64 / (SAMPLE_POINTS - 1) as f64).exp().round() as usize)
            .map(|n| n.clamp(first, last))
            .collect()
    };
    idx.dedup();
    let ns: Vec<f64> = idx.iter().map(|&n| n as f64).collect();
    let vs: Vec<f64> = idx.iter().map(|&n| series.get(n).expect("index in range")).collect();
    estimate_limit(&ns, &vs, model)
}

/// Estimates the limit of `values` sampled at increasing abscissae `ns`.
pub fn estimate_limit(ns: &[f64], values: &[f64], model: TailModel) -> LimitEstimate {
    assert_eq!(ns.len(), values.len());
    let points = ns.len();
    let scale = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if points == 0 || scale < 1e-300 {
        return LimitEstimate {
            limit: 0.0,
            exponent: 0.0,
            residual: 0.0,
            points,
            method: FitMethod::Zero,
        };
    }
    let min_points = match model {
        TailModel::PowerLaw => 4,
        TailModel::Cesaro => 6,
    };
    if points == 3 {
        if let Some(est) = three_point(ns, values) {
            return est;
        }
    }
    if points < min_points {
        return LimitEstimate {
            limit: *values.last().unwrap(),
            exponent: 0.0,
            residual: 0.0,
            points,
            method: FitMethod::LastValue,
        };
    }

    let n_ref = *ns.last().unwrap();
    let xs: Vec<f64> = ns.iter().map(|n| n / n_ref).collect();
    let ys = DVector::from_iterator(points, values.iter().map(|v| v / scale));

    let rich = points >= 8;
    let power = fit_family(&xs, &ys, |x, p, out: &mut Vec<f64>| {
        out.push(1.0);
        out.push(x.powf(-p));
        out.push(x.powf(-p - 1.0));
        if rich {
            out.push(x.powf(-p - 2.0));
        }
        if model == TailModel::Cesaro {
            out.push(1.0 / x);
            out.push(x.ln() / x);
        }
    }, 0.02, 6.0);

    // r^n = exp(−κ n); κ scanned relative to the sampled span
    let span = (ns.last().unwrap() - ns[0]).max(1.0);
    let xg: Vec<f64> = ns.iter().map(|n| (n - ns[0]) / span).collect();
    let geometric = fit_family(&xg, &ys, |x, k, out: &mut Vec<f64>| {
        out.push(1.0);
        out.push((-k * x).exp());
    }, 0.01, 60.0);

    let (method, fit, exponent) = if geometric.residual < power.residual {
        (FitMethod::Geometric, geometric, geometric.param / span)
    } else {
        (FitMethod::PowerLaw, power, power.param)
    };
    LimitEstimate {
        limit: fit.intercept * scale,
        exponent,
        residual: fit.residual,
        points,
        method,
    }
}

#[derive(Debug, Clone, Copy)]
struct Fit {
    param: f64,
    intercept: f64,
    residual: f64,
}

fn least_squares<F>(xs: &[f64], ys: &DVector<f64>, basis: &F, param: f64) -> Option<(f64, f64)>
where
    F: Fn(f64, f64, &mut Vec<f64>),
{
    let mut row = Vec::new();
    basis(xs[0], param, &mut row);
    let cols = row.len();
    let mut a = DMatrix::<f64>::zeros(xs.len(), cols);
    for (i, &x) in xs.iter().enumerate() {
        row.clear();
        basis(x, param, &mut row);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(ys, 1e-14).ok()?;
    let r = &a * &coef - ys;
    let rms = (r.norm_squared() / xs.len() as f64).sqrt();
    rms.is_finite().then_some((coef[0], rms))
}

fn fit_family<F>(xs: &[f64], ys: &DVector<f64>, basis: F, lo: f64, hi: f64) -> Fit
where
    F: Fn(f64, f64, &mut Vec<f64>),
{
    let eval = |p: f64| least_squares(xs, ys, &basis, p).map_or(f64::INFINITY, |(_, r)| r);
    let steps = 300;
    let h = (hi - lo) / steps as f64;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=steps {
        let p = lo + h * i as f64;
        let r = eval(p);
        if r < best.1 {
            best = (p, r);
        }
    }
    // golden-section refinement on the bracketing cell
    let (mut a, mut b) = ((best.0 - h).max(lo * 0.5), best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 * (1.0 + best.0.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d);
        }
    }
    let p = if fc < fd { c } else { d };
    let p = if eval(p) <= best.1 { p } else { best.0 };
    match least_squares(xs, ys, &basis, p) {
        Some((intercept, residual)) => Fit {
            param: p,
            intercept,
            residual,
        },
        None => Fit {
            param: p,
            intercept: ys[ys.len() - 1],
            residual: f64::INFINITY,
        },
    }
}

/// Exact `L + C n^{-p}` through three points (Aitken-type), valid for
/// monotone samples.
fn three_point(ns: &[f64], v: &[f64]) -> Option<LimitEstimate> {
    let (d1, d2) = (v[1] - v[0], v[2] - v[1]);
    if d1 == 0.0 || d2 == 0.0 || d1.signum() != d2.signum() {
        return None;
    }
    // solve (n1^{-p} − n2^{-p}) / (n0^{-p} − n1^{-p}) = d2 / d1 for p
    let target = d2 / d1;
    let ratio = |p: f64| (ns[1].powf(-p) - ns[2].powf(-p)) / (ns[0].powf(-p) - ns[1].powf(-p));
    let (mut lo, mut hi) = (1e-6, 50.0);
    let (rlo, rhi) = (ratio(lo) - target, ratio(hi) - target);
    if rlo.signum() == rhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (ratio(mid) - target).signum() == rlo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let c = d2 / (ns[2].powf(-p) - ns[1].powf(-p));
    Some(LimitEstimate {
        limit: v[2] - c * ns[2].powf(-p),
        exponent: p,
        residual: 0.0,
        points: 3,
        method: FitMethod::ThreePoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product_series(n_max: usize, lambda: f64, rate: impl Fn(f64) -> f64) -> Series {
        let mut acc = 1.0;
        let mut out = Vec::with_capacity(n_max);
        for k in 0..n_max {
            let a = rate(k as f64);
            acc *= a / (lambda + a);
            out.push(acc);
        }
        Series::new(1, out)
    }

    #[test]
    fn series_indexing() {
        let s = Series::new(1, vec![0.5, 0.4, 0.36]);
        assert_eq!(s.get(1), Some(0.5));
        assert_eq!(s.get(0), None);
        assert_eq!(s.last_index(), Some(3));
        assert_eq!(s.max_increase(), 0.0);
    }

    #[test]
    fn quadratic_product_limit() {
        let s = product_series(10_000, 1.0, |k| (k + 1.0).powi(2));
        let est = series_limit(&s, TailModel::PowerLaw);
        let oracle = std::f64::consts::PI / std::f64::consts::PI.sinh();
        assert!((est.limit - oracle).abs() < 1e-7, "{est:?}");
    }

    #[test]
    fn algebraic_decay_extrapolates_to_zero() {
        for lambda in [0.5, 1.0, 2.0] {
            let s = product_series(10_000, lambda, |k| k + 1.0);
            let est = series_limit(&s, TailModel::PowerLaw);
            assert!(est.limit.abs() < 1e-7, "lambda {lambda}: {est:?}");
        }
    }

    #[test]
    fn harmonic_cesaro_extrapolates_to_zero() {
        let mut h = 0.0;
        let vals: Vec<f64> = (1..=1000)
            .map(|n| {
                h += 1.0 / n as f64;
                h / n as f64
            })
            .collect();
        let est = series_limit(&Series::new(1, vals), TailModel::Cesaro);
        assert!(est.limit.abs() < 1e-6, "{est:?}");
    }

    #[test]
    fn zero_and_short_series() {
        let est = series_limit(&Series::new(1, vec![0.0; 10]), TailModel::PowerLaw);
        assert_eq!(est.method, FitMethod::Zero);
        let est = estimate_limit(&[1.0, 2.0], &[0.5, 0.3], TailModel::PowerLaw);
        assert_eq!(est.method, FitMethod::LastValue);
        assert_eq!(est.limit, 0.3);
    }

    #[test]
    fn three_point_is_exact_for_power_law() {
        let f = |n: f64| 0.25 + 2.0 * n.powf(-0.7);
        let ns = [100.0, 200.0, 400.0];
        let vs: Vec<f64> = ns.iter().map(|&n| f(n)).collect();
        let est = estimate_limit(&ns, &vs, TailModel::PowerLaw);
        assert_eq!(est.method, FitMethod::ThreePoint);
        assert!((est.limit - 0.25).abs() < 1e-10 && (est.exponent - 0.7).abs() < 1e-8);
    }

    #[test]
    fn ladder_fit_with_four_points() {
        let s = product_series(10_000, 1.0, |k| (k + 1.0).powi(2));
        let ns = [1250.0, 2500.0, 5000.0, 10_000.0];
        let vs: Vec<f64> = ns.iter().map(|&n| s.get(n as usize).unwrap()).collect();
        let est = estimate_limit(&ns, &vs, TailModel::PowerLaw);
        let oracle = std::f64::consts::PI / std::f64::consts::PI.sinh();
        assert!((est.limit - oracle).abs() < 1e-7, "{est:?}");
    }
}
