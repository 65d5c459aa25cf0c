//! Non-minimal substochastic extensions in the dishonest case and bounded
//! potential perturbations.
//!
//! Given `u₀ ≥ 0`, `‖u₀‖ ≤ 1`, the generator `G̃u = Gu + (a₀ − ā)(u) u₀` has
//! resolvent
//!
//! ```text
//! R(λ,G̃)u = R(λ,G)u + α_u R(λ,G)u₀,    α_u = ⟨Δ_λ,u⟩ / (1 − ⟨Δ_λ,u₀⟩).
//! ```
//!
//! On a truncation `(a₀ − ā)` is the flux through the edge of the retained
//! states, which `G̃` re-injects at `u₀`. The family is then an exact
//! resolvent family at every `N`; honest models have `Δ_λ → 0` along the
//! ladder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KatoError, Result};
use crate::kato::{euler_trajectory, resolvent_with_functionals, SeriesOptions};
use crate::operators::{GeneratorPair, Potential};
use crate::state_space::{Mode, StateVector, C64, DEFAULT_POSITIVITY_TOL};

/// `⟨Δ_λ,u₀⟩` below this marks the construction as degenerate.
pub const DEGENERATE_DEFECT: f64 = 1e-14;
const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct NonMinimalSpec {
    gen: GeneratorPair,
    lambda: f64,
    u0: StateVector,
    series: SeriesOptions,
    delta_u0: f64,
    r_u0: StateVector,
}

impl NonMinimalSpec {
    pub fn new(gen: GeneratorPair, lambda: f64, u0: StateVector, series: SeriesOptions) -> Result<Self> {
        gen.check_state(&u0)?;
        if !u0.is_positive(DEFAULT_POSITIVITY_TOL) {
            return Err(KatoError::NotPositive { min: u0.min_value() });
        }
        let mass = u0.psi_norm();
        if mass <= 0.0 || u0.is_zero() {
            return Err(KatoError::Validation("u0 must be nonzero".into()));
        }
        if mass > 1.0 + 1e-12 {
            return Err(KatoError::Validation(format!("u0 must have norm at most 1, got {mass}")));
        }
        let at = gen.at(lambda)?;
        let (r, fv) = resolvent_with_functionals(&at, &u0, &series)?;
        if !fv.converged {
            return Err(KatoError::Validation("resolvent series for u0 did not converge".into()));
        }
        let margin = 1.0 - fv.defect;
        if margin.is_nan() || margin <= 0.0 {
            return Err(KatoError::Degenerate(format!("1 - <Delta, u0> = {} is not positive", 1.0 - fv.defect)));
        }
        Ok(Self {
            gen,
            lambda,
            u0,
            series,
            delta_u0: fv.defect,
            r_u0: r.value,
        })
    }

    /// Same `u₀` at another spectral parameter.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.gen.clone(), lambda, self.u0.clone(), self.series)
    }

    pub fn generator(&self) -> &GeneratorPair {
        &self.gen
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn u0(&self) -> &StateVector {
        &self.u0
    }

    pub fn delta_u0(&self) -> f64 {
        self.delta_u0
    }

    /// `Δ_λ` vanishes on `u₀`: the family collapses to the minimal resolvent.
    pub fn is_degenerate(&self) -> bool {
        self.delta_u0.abs() < DEGENERATE_DEFECT
    }

    fn minimal_and_alpha(&self, u: &StateVector) -> Result<(StateVector, f64)> {
        self.gen.check_state(u)?;
        let at = self.gen.at(self.lambda)?;
        let (r, fv) = resolvent_with_functionals(&at, u, &self.series)?;
        if !r.converged {
            return Err(KatoError::Validation(format!("resolvent series did not converge after {} terms", r.terms_used)));
        }
        Ok((r.value, fv.defect / (1.0 - self.delta_u0)))
    }

    /// `⟨Δ_λ, u⟩`.
    pub fn delta(&self, u: &StateVector) -> Result<f64> {
        Ok(self.minimal_and_alpha(u)?.1 * (1.0 - self.delta_u0))
    }

    /// `α_u = ⟨Δ_λ,u⟩ / (1 − ⟨Δ_λ,u₀⟩)`.
    pub fn alpha(&self, u: &StateVector) -> Result<f64> {
        Ok(self.minimal_and_alpha(u)?.1)
    }
}

/// `R(λ,G̃)u`.
pub fn nonminimal_resolvent(spec: &NonMinimalSpec, u: &StateVector) -> Result<StateVector> {
    let (mut v, alpha) = spec.minimal_and_alpha(u)?;
    v.add_scaled(alpha, &spec.r_u0);
    Ok(v)
}

/// Euler approximation of the semigroup generated by `G̃`.
pub fn nonminimal_semigroup_apply(spec: &NonMinimalSpec, t: f64, u: &StateVector, n_steps: usize) -> Result<StateVector> {
    spec.gen.check_state(u)?;
    if t == 0.0 {
        return Ok(u.clone());
    }
    let at_mu = spec.with_lambda(n_steps as f64 / t.max(f64::MIN_POSITIVE))?;
    let traj = euler_trajectory(t, u, n_steps, |_, v| nonminimal_resolvent(&at_mu, v))?;
    Ok(traj.into_iter().last().unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCheck {
    pub name: String,
    pub passed: bool,
    /// Largest violation or residual observed.
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub checks: Vec<FamilyCheck>,
    pub violations: Vec<String>,
    pub degenerate: bool,
}

impl ExtensionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Random positive unit-mass vectors supported away from the truncation
/// edge: the first `⌊N/2⌋` coordinates, or the leading `⌊N/2⌋ × ⌊N/2⌋`
/// block in matrix mode.
pub fn domain_samples(mode: Mode, dim: usize, count: usize, seed: u64) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = (dim / 2).max(1);
    (0..count)
        .map(|_| match mode {
            Mode::Sequence => {
                let mut c = vec![0.0; dim];
                for x in c.iter_mut().take(support) {
                    *x = rng.gen_range(0.0..1.0);
                }
                let s: f64 = c.iter().sum();
                StateVector::sequence(c.into_iter().map(|x| x / s).collect::<Vec<_>>()).unwrap()
            }
            Mode::Matrix => {
                let psi = nalgebra::DVector::from_fn(dim, |i, _| {
                    if i < support {
                        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                let psi = &psi / C64::new(psi.norm(), 0.0);
                StateVector::outer(&psi)
            }
        })
        .collect()
}

/// Checks on the samples: (a) `λR(λ,G̃)` is substochastic, (b) the
/// resolvent identity between `λ` and `2λ`, (c) `R(λ,G̃)(λ − A − B)v = v`,
/// (d) `R(λ,G)u ≤ R(λ,G̃)u`.
pub fn verify_extension_family(spec: &NonMinimalSpec, samples: &[StateVector]) -> Result<ExtensionReport> {
    let lambda = spec.lambda;
    let other = spec.with_lambda(2.0 * lambda)?;
    let (mut sub, mut ident, mut ext, mut dom) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for u in samples {
        spec.gen.check_state(u)?;
        if !u.is_positive(DEFAULT_POSITIVITY_TOL) {
            return Err(KatoError::NotPositive { min: u.min_value() });
        }
        let scale = u.psi_norm().max(1e-300);

        let r = nonminimal_resolvent(spec, u)?;
        let lr = r.scaled(lambda);
        sub = sub.max((-lr.min_value()).max(0.0) / scale);
        sub = sub.max((lr.psi_norm() - u.psi_norm()).max(0.0) / scale);

        // R(λ) − R(μ) = (μ − λ) R(λ) R(μ)
        let r_mu = nonminimal_resolvent(&other, u)?;
        let rr = nonminimal_resolvent(spec, &r_mu)?;
        let mut lhs = &r - &r_mu;
        lhs.add_scaled(-(2.0 * lambda - lambda), &rr);
        ident = ident.max(lhs.norm() / scale);

        let mut z = u.scaled(lambda);
        z.add_scaled(-1.0, &spec.gen.apply_a(u)?);
        z.add_scaled(-1.0, &spec.gen.apply_b(u)?);
        let back = nonminimal_resolvent(spec, &z)?;
        ext = ext.max(back.max_abs_diff(u) / scale);

        let (rmin, _) = spec.minimal_and_alpha(u)?;
        dom = dom.max((-(&r - &rmin).min_value()).max(0.0) / scale);
    }
    let checks = vec![
        FamilyCheck {
            name: "substochastic".into(),
            passed: sub <= CHECK_TOL,
            worst: sub,
        },
        FamilyCheck {
            name: "resolvent_identity".into(),
            passed: ident <= CHECK_TOL,
            worst: ident,
        },
        FamilyCheck {
            name: "extension".into(),
            passed: ext <= CHECK_TOL,
            worst: ext,
        },
        FamilyCheck {
            name: "minimal_dominance".into(),
            passed: dom <= CHECK_TOL,
            worst: dom,
        },
    ];
    let violations = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} violated (worst {:e})", c.name, c.worst))
        .collect();
    Ok(ExtensionReport {
        checks,
        violations,
        degenerate: spec.is_degenerate(),
    })
}

/// `(A − K, B)` for a bounded positive potential `K`.
pub fn perturb_with_potential(gen: &GeneratorPair, potential: Potential) -> Result<GeneratorPair> {
    GeneratorPair::wrap_potential(gen.clone(), potential)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub steps: usize,
    /// Largest `(BR_K)ⁿu − (BR)ⁿu` in the cone order (0 when dominated).
    pub worst_violation: f64,
}

/// Compares `(BR(λ,A_K))ⁿu` with `(BR(λ,A))ⁿu` for `n = 0..=n_max`.
pub fn iterated_domination(base: &GeneratorPair, perturbed: &GeneratorPair, lambda: f64, u: &StateVector, n_max: usize) -> Result<DominationReport> {
    if base.mode() != perturbed.mode() || base.dim() != perturbed.dim() {
        return Err(KatoError::Validation("base and perturbed pairs act on different spaces".into()));
    }
    base.check_state(u)?;
    if !u.is_positive(DEFAULT_POSITIVITY_TOL) {
        return Err(KatoError::NotPositive { min: u.min_value() });
    }
    let (at, at_k) = (base.at(lambda)?, perturbed.at(lambda)?);
    let (mut v, mut vk) = (u.clone(), u.clone());
    let mut worst = 0.0f64;
    for _ in 0..n_max {
        v = at.apply_br_unchecked(&v);
        vk = at_k.apply_br_unchecked(&vk);
        worst = worst.max(-(&v - &vk).min_value());
    }
    Ok(DominationReport {
        steps: n_max,
        worst_violation: worst.max(0.0),
    })
}
