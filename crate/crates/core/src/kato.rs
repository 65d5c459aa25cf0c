//! Minimal resolvent series, the loss functionals `a`, `a₀`, `ā`, the defect
//! `⟨Δ_λ, u⟩ = a₀(R(λ,G)u) − ā(R(λ,G)u)` and time-domain evaluation of the
//! minimal semigroup.
//!
//! `R(λ,G)u = Σ_k R(λ,A)(BR(λ,A))ᵏu`. Inputs are split into positive and
//! negative parts and each part is summed monotonically.

use serde::{Deserialize, Serialize};

use crate::error::{KatoError, Result};
use crate::operators::{GeneratorPair, ResolventAt};
use crate::series::Series;
use crate::state_space::{Mode, StateVector, DEFAULT_POSITIVITY_TOL};

pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
pub const MIN_SERIES_TERMS: usize = 8;

/// Truncation rule for the resolvent series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    /// Stop once `λ` times an increment's `Ψ`-norm, and the geometric
    /// estimate of the remaining tail, both drop below this.
    pub tol: f64,
    pub max_terms: usize,
    pub min_terms: usize,
}

impl SeriesOptions {
    pub fn for_mode(mode: Mode) -> Self {
        Self {
            tol: DEFAULT_SERIES_TOL,
            max_terms: match mode {
                Mode::Sequence => 1_000_000,
                Mode::Matrix => 10_000,
            },
            min_terms: MIN_SERIES_TERMS,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_terms(mut self, max_terms: usize) -> Self {
        self.max_terms = max_terms;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(KatoError::Validation(format!("series tolerance must be positive, got {}", self.tol)));
        }
        if self.max_terms == 0 {
            return Err(KatoError::Validation("max_terms must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KatoSeriesResult {
    pub value: StateVector,
    pub terms_used: usize,
    /// `Ψ`-norm of the last increment (summed over the positive and negative
    /// parts).
    pub tail_norm_estimate: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValues {
    /// `a₀(R(λ,G)u) = ⟨Ψ,u⟩ − λ⟨Ψ,R(λ,G)u⟩`.
    pub a0: f64,
    /// `ā(R(λ,G)u) = Σ_k a(R(λ,A)(BR(λ,A))ᵏu)`.
    pub abar: f64,
    /// `⟨Δ_λ, u⟩ = a0 − abar`.
    pub defect: f64,
    /// Partial sums of `ā`, starting at `k = 0`.
    pub partial_sums: Series,
    pub terms_used: usize,
    pub converged: bool,
}

struct PartSum {
    sum: StateVector,
    terms: usize,
    tail: f64,
    converged: bool,
}

/// Sums `Σ_k R(BR)ᵏ part` for one cone part, calling `on_term(k, term)`.
fn sum_part(at: &ResolventAt<'_>, part: &StateVector, opts: &SeriesOptions, mut on_term: impl FnMut(usize, &StateVector)) -> PartSum {
    let gen = at.generator();
    let mut sum = StateVector::zeros(part.mode(), part.dim());
    if part.is_zero() {
        return PartSum {
            sum,
            terms: 0,
            tail: 0.0,
            converged: true,
        };
    }
    let mut current = part.clone();
    let mut tail = f64::INFINITY;
    let mut prev = f64::INFINITY;
    for k in 0..opts.max_terms {
        let term = at.resolvent_unchecked(&current);
        sum.add_scaled(1.0, &term);
        on_term(k, &term);
        // measured in mass units of the contraction λR
        let inc = at.lambda() * term.psi_norm().abs();
        // geometric estimate of the neglected remainder
        let ratio = inc / prev;
        let rest = if inc == 0.0 {
            0.0
        } else if ratio < 1.0 {
            inc * ratio / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        prev = inc;
        tail = inc / at.lambda();
        if k + 1 >= opts.min_terms && inc < opts.tol && rest < opts.tol {
            return PartSum {
                sum,
                terms: k + 1,
                tail,
                converged: true,
            };
        }
        current = gen.apply_b_unchecked(&term);
    }
    PartSum {
        sum,
        terms: opts.max_terms,
        tail,
        converged: false,
    }
}

fn split_for_series(u: &StateVector) -> [(f64, StateVector); 2] {
    if u.is_positive(0.0) {
        return [(1.0, u.clone()), (-1.0, StateVector::zeros(u.mode(), u.dim()))];
    }
    let (pos, neg) = u.split_positive();
    [(1.0, pos), (-1.0, neg)]
}

/// `R(λ,G)u` by the minimal (Kato) series for a pre-bound `λ`.
pub fn kato_series(at: &ResolventAt<'_>, u: &StateVector, opts: &SeriesOptions) -> Result<KatoSeriesResult> {
    opts.validate()?;
    at.generator().check_state(u)?;
    let mut value = StateVector::zeros(u.mode(), u.dim());
    let (mut terms, mut tail, mut converged) = (0, 0.0, true);
    for (sign, part) in split_for_series(u) {
        let ps = sum_part(at, &part, opts, |_, _| {});
        value.add_scaled(sign, &ps.sum);
        terms = terms.max(ps.terms);
        tail += ps.tail;
        converged &= ps.converged;
    }
    Ok(KatoSeriesResult {
        value,
        terms_used: terms,
        tail_norm_estimate: tail,
        converged,
    })
}

/// `R(λ,G)u` for the minimal substochastic semigroup generated by an
/// extension of `A + B`.
pub fn minimal_resolvent(gen: &GeneratorPair, lambda: f64, u: &StateVector, opts: &SeriesOptions) -> Result<KatoSeriesResult> {
    kato_series(&gen.at(lambda)?, u, opts)
}

/// `a(v) = −⟨Ψ, Av + Bv⟩` on domain vectors.
pub fn functional_a(gen: &GeneratorPair, v: &StateVector) -> Result<f64> {
    gen.loss_functional(v)
}

/// `a₀`, `ā` and the defect at `R(λ,G)u`, for a pre-bound `λ`.
pub fn functionals_at(at: &ResolventAt<'_>, u: &StateVector, opts: &SeriesOptions) -> Result<FunctionalValues> {
    Ok(resolvent_with_functionals(at, u, opts)?.1)
}

/// `R(λ,G)u` together with the functionals, from one pass of the series.
pub fn resolvent_with_functionals(at: &ResolventAt<'_>, u: &StateVector, opts: &SeriesOptions) -> Result<(KatoSeriesResult, FunctionalValues)> {
    opts.validate()?;
    let gen = at.generator();
    gen.check_state(u)?;
    let mut value = StateVector::zeros(u.mode(), u.dim());
    let mut a_terms: Vec<f64> = Vec::new();
    let (mut terms, mut tail, mut converged) = (0, 0.0, true);
    for (sign, part) in split_for_series(u) {
        let ps = sum_part(at, &part, opts, |k, term| {
            if a_terms.len() <= k {
                a_terms.resize(k + 1, 0.0);
            }
            a_terms[k] += sign * gen.loss_functional_unchecked(term);
        });
        value.add_scaled(sign, &ps.sum);
        terms = terms.max(ps.terms);
        tail += ps.tail;
        converged &= ps.converged;
    }
    let mut acc = 0.0;
    let partial: Vec<f64> = a_terms
        .iter()
        .map(|a| {
            acc += a;
            acc
        })
        .collect();
    let abar = acc;
    let a0 = u.psi_norm() - at.lambda() * value.psi_norm();
    let fv = FunctionalValues {
        a0,
        abar,
        defect: a0 - abar,
        partial_sums: Series::new(0, partial),
        terms_used: terms,
        converged,
    };
    let kr = KatoSeriesResult {
        value,
        terms_used: terms,
        tail_norm_estimate: tail,
        converged,
    };
    Ok((kr, fv))
}

/// `a₀`, `ā` and `⟨Δ_λ, u⟩` evaluated on `R(λ,G)u`.
pub fn abar_on_resolvent(gen: &GeneratorPair, lambda: f64, u: &StateVector, opts: &SeriesOptions) -> Result<FunctionalValues> {
    functionals_at(&gen.at(lambda)?, u, opts)
}

fn check_time(t: f64, n_steps: usize) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(KatoError::Validation(format!("time must be finite and nonnegative, got {t}")));
    }
    if n_steps == 0 {
        return Err(KatoError::Validation("n_steps must be at least 1".into()));
    }
    Ok(())
}

/// Applies a resolvent family `μ ↦ R(μ)` through the backward Euler /
/// Post–Widder scheme, returning `v_0 = u, …, v_n ≈ V(t)u`.
pub(crate) fn euler_trajectory<F>(t: f64, u: &StateVector, n_steps: usize, mut resolvent: F) -> Result<Vec<StateVector>>
where
    F: FnMut(f64, &StateVector) -> Result<StateVector>,
{
    check_time(t, n_steps)?;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(u.clone());
    if t == 0.0 {
        return Ok(out);
    }
    let mu = n_steps as f64 / t;
    for _ in 0..n_steps {
        let next = resolvent(mu, out.last().unwrap())?.scaled(mu);
        out.push(next);
    }
    Ok(out)
}

fn converged_series(at: &ResolventAt<'_>, v: &StateVector, opts: &SeriesOptions) -> Result<StateVector> {
    let r = kato_series(at, v, opts)?;
    if !r.converged {
        return Err(KatoError::Validation(format!(
            "resolvent series did not converge at lambda = {} ({} terms, tail {:e})",
            at.lambda(),
            r.terms_used,
            r.tail_norm_estimate
        )));
    }
    Ok(r.value)
}

fn minimal_trajectory(gen: &GeneratorPair, t: f64, u: &StateVector, n_steps: usize, opts: &SeriesOptions) -> Result<Vec<StateVector>> {
    gen.check_state(u)?;
    check_time(t, n_steps)?;
    if t == 0.0 {
        return Ok(vec![u.clone()]);
    }
    let at = gen.at(n_steps as f64 / t)?;
    // the per-step truncation errors add up over the trajectory
    let step_opts = opts.with_tol(opts.tol / n_steps as f64);
    euler_trajectory(t, u, n_steps, |_, v| converged_series(&at, v, &step_opts))
}

/// `((n/t) R(n/t, G))ⁿ u ≈ V(t)u`; `t = 0` returns `u` exactly.
pub fn semigroup_apply(gen: &GeneratorPair, t: f64, u: &StateVector, n_steps: usize, opts: &SeriesOptions) -> Result<StateVector> {
    Ok(minimal_trajectory(gen, t, u, n_steps, opts)?.pop().unwrap())
}

/// Quadrature used for `∫₀ᵗ V(s)u ds` on the Euler grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// `h Σ_{j=1}^{n} v_j`. For the backward Euler iterates
    /// `G(hΣ v_j) = v_n − u` holds exactly, so the `a₀` identity closes.
    #[default]
    RightEndpoint,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDefectOptions {
    pub n_steps: usize,
    /// Spectral parameter used to evaluate `ā` on `w = ∫₀ᵗV(s)u ds`.
    pub lambda: f64,
    pub quadrature: Quadrature,
    pub series: SeriesOptions,
}

impl TimeDefectOptions {
    pub fn new(mode: Mode, n_steps: usize) -> Self {
        Self {
            n_steps,
            lambda: 1.0,
            quadrature: Quadrature::default(),
            series: SeriesOptions::for_mode(mode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDefect {
    /// `D(t,u) = ‖V(t)u‖ − ‖u‖ + ā(∫₀ᵗV(s)u ds)`.
    pub value: f64,
    /// `‖V(t)u‖ − ‖u‖`.
    pub norm_change: f64,
    pub abar: f64,
    pub a0: f64,
    /// `|‖V(t)u‖ − ‖u‖ + a₀(w)|`: consistency of the quadrature with the
    /// generator identity.
    pub a0_residual: f64,
}

/// Honesty defect over `[0, t]`: zero for honest semigroups, negative when
/// mass disappears faster than `ā` accounts for.
pub fn time_defect(gen: &GeneratorPair, t: f64, u: &StateVector, opts: &TimeDefectOptions) -> Result<TimeDefect> {
    gen.check_state(u)?;
    if !u.is_positive(DEFAULT_POSITIVITY_TOL) {
        return Err(KatoError::NotPositive { min: u.min_value() });
    }
    check_time(t, opts.n_steps)?;
    if t == 0.0 {
        return Ok(TimeDefect {
            value: 0.0,
            norm_change: 0.0,
            abar: 0.0,
            a0: 0.0,
            a0_residual: 0.0,
        });
    }
    let traj = minimal_trajectory(gen, t, u, opts.n_steps, &opts.series)?;
    let h = t / opts.n_steps as f64;
    let vt = traj.last().unwrap();
    let mut w = StateVector::zeros(u.mode(), u.dim());
    for v in &traj[1..] {
        w.add_scaled(h, v);
    }
    if opts.quadrature == Quadrature::Trapezoid {
        w.add_scaled(0.5 * h, &traj[0]);
        w.add_scaled(-0.5 * h, vt);
    }
    // w = R(λ,G) z with z = λw − (V(t)u − u)
    let mut z = w.scaled(opts.lambda);
    z.add_scaled(-1.0, vt);
    z.add_scaled(1.0, u);
    let fv = abar_on_resolvent(gen, opts.lambda, &z, &opts.series)?;
    let norm_change = vt.psi_norm() - u.psi_norm();
    Ok(TimeDefect {
        value: norm_change + fv.abar,
        norm_change,
        abar: fv.abar,
        a0: fv.a0,
        a0_residual: (norm_change + fv.a0).abs(),
    })
}
