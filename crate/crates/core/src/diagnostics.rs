//! Honesty diagnostics: power iterates of `BR(λ,A)` and its adjoint, the
//! resolvent defect, the spectral margin of `I − BR` and a verdict rule
//! over a ladder of truncations.
//!
//! On a finite truncation every model is eventually honest: mass that
//! reaches the edge leaves after at most `N` steps. The informative part of
//! a power series is therefore `n < N`, and by default `n_max` is clamped to
//! `N − 1` (probe `j` to `N − 1 − j`) before tail extrapolation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KatoError, Result};
use crate::kato::{functionals_at, SeriesOptions};
use crate::operators::{GeneratorPair, ResolventAt};
use crate::series::{estimate_limit, series_limit, LimitEstimate, Series, TailModel};
use crate::state_space::{DualVector, Mode, StateVector, C64, DEFAULT_POSITIVITY_TOL};

pub const SEQUENCE_MARGIN_CAP: usize = 2000;
/// Cap on the real dimension `N²` of the Hermitian matrix space.
pub const MATRIX_MARGIN_CAP: usize = 2500;
/// Tolerance for the monotonicity invariants of the power series.
pub const MONOTONE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "arg")]
pub enum Probe {
    /// Coordinate `j` (diagonal entry `(j,j)` in matrix mode).
    Coordinate(usize),
    /// `Tr(w)/N`.
    Trace,
    /// `⟨ψ, w ψ⟩` for a normalised vector `ψ`.
    Expectation(Vec<[f64; 2]>),
}

impl Probe {
    pub fn label(&self) -> String {
        match self {
            Probe::Coordinate(j) => format!("coord[{j}]"),
            Probe::Trace => "trace".into(),
            Probe::Expectation(_) => "expectation".into(),
        }
    }

    pub fn defaults(mode: Mode, dim: usize) -> Vec<Probe> {
        match mode {
            Mode::Sequence => {
                let mut v = vec![Probe::Coordinate(0)];
                if dim > 1 {
                    v.push(Probe::Coordinate(1));
                }
                if dim / 2 > 1 {
                    v.push(Probe::Coordinate(dim / 2));
                }
                v
            }
            Mode::Matrix => vec![Probe::Trace, Probe::Coordinate(0)],
        }
    }

    fn validate(&self, mode: Mode, dim: usize) -> Result<()> {
        match self {
            Probe::Coordinate(j) if *j >= dim => Err(KatoError::Validation(format!("probe coordinate {j} out of range for dimension {dim}"))),
            Probe::Expectation(_) if mode == Mode::Sequence => Err(KatoError::Validation("expectation probes need matrix mode".into())),
            Probe::Expectation(psi) if psi.len() != dim => Err(KatoError::DimensionMismatch {
                expected: dim,
                actual: psi.len(),
            }),
            _ => Ok(()),
        }
    }

    fn eval(&self, w: &DualVector) -> f64 {
        match self {
            Probe::Coordinate(j) => w.eval(*j),
            Probe::Trace => {
                let n = w.dim().max(1) as f64;
                match w.as_sequence() {
                    Some(v) => v.sum() / n,
                    None => w.mat().diagonal().iter().map(|z| z.re).sum::<f64>() / n,
                }
            }
            Probe::Expectation(psi) => {
                let m = w.mat();
                let psi: Vec<C64> = psi.iter().map(|p| C64::new(p[0], p[1])).collect();
                let mut acc = C64::new(0.0, 0.0);
                for (i, pi) in psi.iter().enumerate() {
                    for (j, pj) in psi.iter().enumerate() {
                        acc += pi.conj() * m[(i, j)] * pj;
                    }
                }
                acc.re
            }
        }
    }

    /// Largest `n` for which the probe sees the untruncated dynamics.
    fn horizon(&self, dim: usize) -> Option<usize> {
        match self {
            Probe::Coordinate(j) => Some(dim.saturating_sub(1 + j).max(1)),
            _ => None,
        }
    }

    /// Whether the probe's limit enters the verdict. Trace probes average
    /// over coordinates that hit the edge at different times, and a
    /// coordinate far from the origin sees too few steps to show its tail;
    /// both are reported only.
    fn decisive(&self, dim: usize, n_eff: usize, clamped: bool) -> bool {
        match (self, self.horizon(dim)) {
            (Probe::Trace, _) => false,
            (_, Some(h)) if clamped => 10 * h >= 9 * n_eff,
            _ => true,
        }
    }
}

fn require_positive(u: &StateVector) -> Result<()> {
    if !u.is_positive(DEFAULT_POSITIVITY_TOL) {
        return Err(KatoError::NotPositive { min: u.min_value() });
    }
    Ok(())
}

/// `s(n) = ‖(BR)ⁿu‖` and `c(n) = ‖(1/n)Σ_{k<n}(BR)ᵏu‖` in one sweep.
/// `s` starts at `n = 0`, `c` at `n = 1`.
pub fn power_sequences(at: &ResolventAt<'_>, u: &StateVector, n_max: usize) -> Result<(Series, Series)> {
    at.generator().check_state(u)?;
    let positive = u.is_positive(DEFAULT_POSITIVITY_TOL);
    let norm = |v: &StateVector| if positive { v.psi_norm() } else { v.norm() };
    let mut current = u.clone();
    let mut running = StateVector::zeros(u.mode(), u.dim());
    let mut s = Vec::with_capacity(n_max + 1);
    let mut c = Vec::with_capacity(n_max);
    s.push(norm(&current));
    for n in 1..=n_max {
        running.add_scaled(1.0, &current);
        c.push(norm(&running) / n as f64);
        current = at.apply_br_unchecked(&current);
        s.push(norm(&current));
    }
    Ok((Series::new(0, s), Series::new(1, c)))
}

/// `n ↦ ‖(BR(λ,A))ⁿu‖` for `n = 0..=n_max`, `u ≥ 0`.
pub fn norm_decay_sequence(gen: &GeneratorPair, lambda: f64, u: &StateVector, n_max: usize) -> Result<Series> {
    require_positive(u)?;
    Ok(power_sequences(&gen.at(lambda)?, u, n_max)?.0)
}

/// `n ↦ ‖(1/n)Σ_{k<n}(BR(λ,A))ᵏu‖` for `n = 1..=n_max`.
pub fn cesaro_sequence(gen: &GeneratorPair, lambda: f64, u: &StateVector, n_max: usize) -> Result<Series> {
    Ok(power_sequences(&gen.at(lambda)?, u, n_max)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub probe: Probe,
    pub series: Series,
    /// Whether the probe's limit enters the verdict.
    pub decisive: bool,
}

pub(crate) fn dual_power_at(at: &ResolventAt<'_>, probes: &[Probe], n_max: usize) -> Result<Vec<ProbeSeries>> {
    let gen = at.generator();
    for p in probes {
        p.validate(gen.mode(), gen.dim())?;
    }
    let mut w = DualVector::unit(gen.mode(), gen.dim());
    let mut out: Vec<Vec<f64>> = probes.iter().map(|p| vec![p.eval(&w)]).collect();
    for _ in 0..n_max {
        w = at.adjoint_br_unchecked(&w);
        for (vals, p) in out.iter_mut().zip(probes) {
            vals.push(p.eval(&w));
        }
    }
    Ok(probes
        .iter()
        .cloned()
        .zip(out)
        .map(|(probe, values)| ProbeSeries {
            decisive: !matches!(probe, Probe::Trace),
            probe,
            series: Series::new(0, values),
        })
        .collect())
}

/// `w₀ = Ψ`, `wₙ = (BR(λ,A))* w_{n−1}`, read at each probe.
pub fn dual_power_sequence(gen: &GeneratorPair, lambda: f64, probes: &[Probe], n_max: usize) -> Result<Vec<ProbeSeries>> {
    dual_power_at(&gen.at(lambda)?, probes, n_max)
}

/// Orthonormal (Hilbert–Schmidt) real basis of `N × N` Hermitian matrices.
fn hermitian_basis(n: usize) -> Vec<DMatrix<C64>> {
    let mut out = Vec::with_capacity(n * n);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        let mut e = DMatrix::zeros(n, n);
        e[(i, i)] = C64::new(1.0, 0.0);
        out.push(e);
        for j in (i + 1)..n {
            let mut s = DMatrix::zeros(n, n);
            s[(i, j)] = C64::new(r, 0.0);
            s[(j, i)] = C64::new(r, 0.0);
            out.push(s);
            let mut a = DMatrix::zeros(n, n);
            a[(i, j)] = C64::new(0.0, r);
            a[(j, i)] = C64::new(0.0, -r);
            out.push(a);
        }
    }
    out
}

/// Coordinates of a Hermitian matrix in [`hermitian_basis`]:
/// `H_ii`, `√2 Re H_ij`, `√2 Im H_ij`.
fn hermitian_coords(h: &DMatrix<C64>) -> DVector<f64> {
    let n = h.nrows();
    let s = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(h[(i, i)].re);
        for j in (i + 1)..n {
            out.push(s * h[(i, j)].re);
            out.push(s * h[(i, j)].im);
        }
    }
    DVector::from_vec(out)
}

/// Dense matrix of `BR(λ,A)` in the canonical (sequence) or Hermitian
/// (matrix) real basis.
pub(crate) fn assemble_br(at: &ResolventAt<'_>) -> DMatrix<f64> {
    let gen = at.generator();
    let n = gen.dim();
    match gen.mode() {
        Mode::Sequence => {
            let mut m = DMatrix::zeros(n, n);
            for k in 0..n {
                let col = at.apply_br_unchecked(&StateVector::basis(Mode::Sequence, n, k));
                m.set_column(k, col.seq());
            }
            m
        }
        Mode::Matrix => {
            let basis = hermitian_basis(n);
            let d = basis.len();
            let mut m = DMatrix::zeros(d, d);
            for (k, e) in basis.iter().enumerate() {
                let img = at.apply_br_unchecked(&StateVector::from_matrix_unchecked(e));
                m.set_column(k, &hermitian_coords(img.mat()));
            }
            m
        }
    }
}

pub(crate) fn margin_at(at: &ResolventAt<'_>) -> Result<f64> {
    let gen = at.generator();
    let (size, cap) = match gen.mode() {
        Mode::Sequence => (gen.dim(), SEQUENCE_MARGIN_CAP),
        Mode::Matrix => (gen.dim() * gen.dim(), MATRIX_MARGIN_CAP),
    };
    if size > cap {
        return Err(KatoError::SizeExceeded { size, cap });
    }
    if size == 0 {
        return Ok(1.0);
    }
    let br = assemble_br(at);
    Ok(smallest_singular_value(DMatrix::identity(size, size) - br))
}

const DENSE_SVD_MAX: usize = 400;

/// `σ_min(M)`: dense SVD for small matrices, otherwise inverse iteration
/// on `(MᵀM)⁻¹` with LU factors of `M` and `Mᵀ`.
pub(crate) fn smallest_singular_value(m: DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n <= DENSE_SVD_MAX {
        return m.singular_values().iter().copied().fold(f64::INFINITY, f64::min);
    }
    let lu_t = m.transpose().lu();
    let lu = m.lu();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    x /= x.norm();
    let mut sigma = f64::INFINITY;
    for _ in 0..2000 {
        let Some(y) = lu_t.solve(&x) else { return 0.0 };
        let Some(z) = lu.solve(&y) else { return 0.0 };
        let g = z.norm();
        if !(g.is_finite() && g > 0.0) {
            return 0.0;
        }
        let next = 1.0 / g.sqrt();
        x = z / g;
        if (next - sigma).abs() <= 1e-13 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// `σ_min(I − BR_N)` on the truncation carried by `gen`.
pub fn spectral_margin(gen: &GeneratorPair, lambda: f64) -> Result<f64> {
    margin_at(&gen.at(lambda)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Honest,
    Dishonest,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub honest: f64,
    pub dishonest: f64,
    /// Allowed gap between the norm-decay limit and the defect for a
    /// dishonest verdict.
    pub agreement: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            honest: 1e-6,
            dishonest: 1e-3,
            agreement: 1e-2,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.honest > 0.0 && self.dishonest >= 10.0 * self.honest && self.agreement > 0.0) {
            return Err(KatoError::Validation(format!(
                "thresholds need 0 < honest and dishonest >= 10 * honest (got {} / {})",
                self.honest, self.dishonest
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticOptions {
    pub n_max: usize,
    /// `None` selects [`Probe::defaults`].
    pub probes: Option<Vec<Probe>>,
    pub series: SeriesOptions,
    /// Clamp power series to the horizon `N − 1` of the truncation. Off for
    /// models that are exactly finite-dimensional.
    pub clamp_to_truncation: bool,
    /// Compute the spectral margin when the assembly fits under the caps.
    pub spectral_margin: bool,
}

impl DiagnosticOptions {
    pub fn new(mode: Mode, n_max: usize) -> Self {
        Self {
            n_max,
            probes: None,
            series: SeriesOptions::for_mode(mode),
            clamp_to_truncation: true,
            spectral_margin: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailLimits {
    pub norm_decay: LimitEstimate,
    pub cesaro: LimitEstimate,
    /// One estimate per probe, in probe order.
    pub dual_power: Vec<LimitEstimate>,
}

impl TailLimits {
    /// Largest `|limit|` over the probes that enter the verdict.
    pub fn dual_power_max(&self, probes: &[ProbeSeries]) -> f64 {
        self.dual_power
            .iter()
            .zip(probes)
            .filter(|(_, p)| p.decisive)
            .fold(0.0, |acc, (l, _)| acc.max(l.limit.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestyReport {
    pub lambda: f64,
    pub truncation: usize,
    pub norm_decay: Series,
    pub cesaro: Series,
    pub dual_power: Vec<ProbeSeries>,
    /// `⟨Δ_λ, u⟩` on this truncation.
    pub defect: f64,
    pub spectral_margin: Option<f64>,
    pub limits: TailLimits,
    pub verdict: Verdict,
    pub evidence: Vec<String>,
}

fn prefix(series: &Series, len: usize) -> Series {
    Series::new(series.start, series.values[..series.values.len().min(len)].to_vec())
}

/// Runs the four diagnostics for one `(model, λ)` on one truncation. The
/// verdict stays `Inconclusive` until [`apply_verdict`] combines a ladder.
pub fn diagnose(gen: &GeneratorPair, lambda: f64, u: &StateVector, opts: &DiagnosticOptions) -> Result<HonestyReport> {
    require_positive(u)?;
    if opts.n_max == 0 {
        return Err(KatoError::Validation("n_max must be at least 1".into()));
    }
    let at = gen.at(lambda)?;
    let dim = gen.dim();
    let n_eff = if opts.clamp_to_truncation {
        opts.n_max.min(dim.saturating_sub(1)).max(1)
    } else {
        opts.n_max
    };
    let probes = opts.probes.clone().unwrap_or_else(|| Probe::defaults(gen.mode(), dim));
    let mut evidence = Vec::new();

    let (norm_decay, cesaro) = power_sequences(&at, u, n_eff)?;
    let mut dual_power = dual_power_at(&at, &probes, n_eff)?;
    for ps in &mut dual_power {
        ps.decisive = ps.probe.decisive(dim, n_eff, opts.clamp_to_truncation);
    }
    let fv = functionals_at(&at, u, &opts.series)?;
    if !fv.converged {
        evidence.push(format!("resolvent series not converged after {} terms", fv.terms_used));
    }

    let norm_limit = series_limit(&norm_decay, TailModel::PowerLaw);
    let cesaro_limit = series_limit(&cesaro, TailModel::Cesaro);
    let dual_limits: Vec<LimitEstimate> = dual_power
        .iter()
        .map(|ps| {
            let s = match ps.probe.horizon(dim) {
                Some(h) if opts.clamp_to_truncation => prefix(&ps.series, h + 1),
                _ => ps.series.clone(),
            };
            series_limit(&s, TailModel::PowerLaw)
        })
        .collect();

    if norm_decay.max_increase() > MONOTONE_TOL * norm_decay.values[0].max(1.0) {
        evidence.push(format!("norm_decay not monotone (max increase {:e})", norm_decay.max_increase()));
    }
    for ps in &dual_power {
        let inc = ps.series.max_increase();
        if inc > MONOTONE_TOL {
            evidence.push(format!("dual_power {} not monotone (max increase {inc:e})", ps.probe.label()));
        }
    }

    let spectral_margin = if opts.spectral_margin {
        match margin_at(&at) {
            Ok(m) => Some(m),
            Err(KatoError::SizeExceeded { size, cap }) => {
                evidence.push(format!("spectral margin skipped: size {size} exceeds cap {cap}"));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    evidence.push(format!(
        "N={dim} n={n_eff}: norm_decay s(n)={:.6e} limit {:.6e} ({:?}, p={:.3}); cesaro limit {:.3e}; dual max limit {:.6e}; defect {:.6e}",
        norm_decay.last().unwrap_or(0.0),
        norm_limit.limit,
        norm_limit.method,
        norm_limit.exponent,
        cesaro_limit.limit,
        dual_limits.iter().zip(&dual_power).filter(|(_, p)| p.decisive).fold(0.0f64, |a, (l, _)| a.max(l.limit.abs())),
        fv.defect
    ));
    if let Some(m) = spectral_margin {
        evidence.push(format!("N={dim}: spectral margin {m:.6e}"));
    }

    Ok(HonestyReport {
        lambda,
        truncation: dim,
        norm_decay,
        cesaro,
        dual_power,
        defect: fv.defect,
        spectral_margin,
        limits: TailLimits {
            norm_decay: norm_limit,
            cesaro: cesaro_limit,
            dual_power: dual_limits,
        },
        verdict: Verdict::Inconclusive,
        evidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderVerdict {
    pub verdict: Verdict,
    /// Defect extrapolated along the ladder (`N → ∞`).
    pub defect_limit: LimitEstimate,
    /// Norm-decay limit on the largest truncation.
    pub norm_decay_limit: f64,
    /// `|defect_limit − norm_decay_limit|`.
    pub cross_check: f64,
    pub evidence: Vec<String>,
}

/// Combines per-truncation reports (ordered or not) into a verdict. A
/// single point is accepted only for exactly finite-dimensional models.
pub fn verdict(reports: &[HonestyReport], thresholds: &Thresholds, exact_dimension: bool) -> Result<LadderVerdict> {
    thresholds.validate()?;
    if reports.is_empty() || (reports.len() < 2 && !exact_dimension) {
        return Err(KatoError::Validation(format!(
            "verdict needs at least 2 ladder points, got {}",
            reports.len()
        )));
    }
    let mut sorted: Vec<&HonestyReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.truncation);
    let largest = sorted.last().unwrap();

    let defect_limit = if exact_dimension {
        let d = largest.defect;
        LimitEstimate {
            limit: d,
            exponent: 0.0,
            residual: 0.0,
            points: 1,
            method: crate::series::FitMethod::LastValue,
        }
    } else {
        let ns: Vec<f64> = sorted.iter().map(|r| r.truncation as f64).collect();
        let ds: Vec<f64> = sorted.iter().map(|r| r.defect).collect();
        estimate_limit(&ns, &ds, TailModel::PowerLaw)
    };
    let norm_decay_limit = largest.limits.norm_decay.limit;
    let cross_check = (defect_limit.limit - norm_decay_limit).abs();
    let mut evidence = vec![format!(
        "defect ladder limit {:.9e} ({:?}, {} points); norm_decay limit {:.9e}; |difference| {:.3e}",
        defect_limit.limit, defect_limit.method, defect_limit.points, norm_decay_limit, cross_check
    )];

    let negative = sorted.iter().any(|r| r.defect < -1e-10);
    if negative {
        evidence.push("negative defect on a truncation".into());
    }

    let (th, td) = (thresholds.honest, thresholds.dishonest);
    let honest_points = sorted.iter().all(|r| {
        r.limits.norm_decay.limit.abs() < th
            && r.limits.cesaro.limit.abs() < th
            && r.limits.dual_power_max(&r.dual_power) < th
    });
    let honest = !negative && honest_points && defect_limit.limit.abs() < th;

    let dishonest_points = sorted.iter().all(|r| r.limits.norm_decay.limit > td && (r.limits.norm_decay.limit - defect_limit.limit).abs() < thresholds.agreement);
    let dishonest = !negative && dishonest_points && defect_limit.limit > td;

    let v = match (honest, dishonest) {
        (true, false) => Verdict::Honest,
        (false, true) => Verdict::Dishonest,
        _ => {
            if !honest_points && sorted.iter().all(|r| r.limits.norm_decay.limit.abs() < th) {
                evidence.push("norm decay vanishes but Cesàro or dual-power limits do not".into());
            }
            if honest_points && defect_limit.limit.abs() >= th {
                evidence.push("power series vanish but the extrapolated defect does not".into());
            }
            if !dishonest_points && sorted.iter().any(|r| r.limits.norm_decay.limit > td) {
                evidence.push("norm-decay limit above the dishonest threshold on some but not all points, or disagrees with the defect".into());
            }
            Verdict::Inconclusive
        }
    };
    Ok(LadderVerdict {
        verdict: v,
        defect_limit,
        norm_decay_limit,
        cross_check,
        evidence,
    })
}

/// [`verdict`], also writing the outcome into every report.
pub fn apply_verdict(reports: &mut [HonestyReport], thresholds: &Thresholds, exact_dimension: bool) -> Result<LadderVerdict> {
    let lv = verdict(reports, thresholds, exact_dimension)?;
    for r in reports.iter_mut() {
        r.verdict = lv.verdict;
    }
    Ok(lv)
}
