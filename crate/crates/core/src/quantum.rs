//! Lindblad generator pairs on `N × N` truncations, the form `Υ`, the maps
//! `P_λ = R(λ,A)*` and `Q_λ = (BR(λ,A))*`, conservativity iterates,
//! complete positivity and a periodic finite-difference SsQDS model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{dual_power_at, margin_at, Probe};
use crate::error::{KatoError, Result};
use crate::kato::{semigroup_apply, SeriesOptions};
use crate::operators::{GeneratorPair, LindbladPair};
use crate::series::Series;
use crate::state_space::{hermitian_eigenvalues, DualVector, Mode, StateVector, C64};

pub const DISSIPATIVITY_TOL: f64 = 1e-10;
const RANDOM_SAMPLES: usize = 100;
const SAMPLE_SEED: u64 = 0x5eed;
pub const CHOI_MAX_DIM: usize = 12;
pub const CHOI_PSD_TOL: f64 = 1e-8;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Validated `(Y, {Lₗ})` with `Y + Y* + Σ Lₗ*Lₗ ≤ 0` on the sample set.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pair: GeneratorPair,
    equality_case: bool,
    worst: f64,
    tol: f64,
}

/// `⟨u, (Y + Y* + Σ L*L) u⟩ = 2Re⟨u,Yu⟩ + Σ‖Lu‖²`.
fn dissipation(y: &DMatrix<C64>, jumps: &[DMatrix<C64>], escape: Option<&DMatrix<C64>>, u: &DVector<C64>) -> f64 {
    let yu = y * u;
    let mut acc = 2.0 * u.dotc(&yu).re;
    if let Some(e) = escape {
        acc += u.dotc(&(e * u)).re;
    }
    for l in jumps {
        acc += (l * u).norm_squared();
    }
    acc
}

impl LindbladModel {
    /// Checks dissipativity on the canonical basis and 100 seeded random
    /// unit vectors. The tolerance is `1e-10` scaled by `max(1, ‖Y‖ + Σ‖L‖²)`
    /// (Frobenius norms) so that fine grids are not rejected for rounding.
    pub fn new(y: DMatrix<C64>, jumps: Vec<DMatrix<C64>>) -> Result<Self> {
        Self::validate(LindbladPair::new_unchecked(y, jumps)?)
    }

    /// As [`LindbladModel::new`] with escape jumps `Σ E*E` that leave the
    /// truncated space (see [`LindbladPair`]).
    pub fn with_escape(y: DMatrix<C64>, jumps: Vec<DMatrix<C64>>, escape: DMatrix<C64>) -> Result<Self> {
        if !crate::state_space::StateVector::matrix(escape.clone())?.is_positive(1e-12) {
            return Err(KatoError::Validation("escape term must be positive semidefinite".into()));
        }
        Self::validate(LindbladPair::new_unchecked(y, jumps)?.with_escape(escape)?)
    }

    fn validate(pair: LindbladPair) -> Result<Self> {
        let n = pair.dim();
        let (y, jumps): (&DMatrix<C64>, Vec<DMatrix<C64>>) = (pair.y(), pair.jumps().cloned().collect());
        let escape = pair.escape().cloned();
        let scale = y.norm() + jumps.iter().map(|l| l.norm_squared()).sum::<f64>() + escape.as_ref().map_or(0.0, |e| e.norm());
        let tol = DISSIPATIVITY_TOL * scale.max(1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        let mut samples: Vec<DVector<C64>> = (0..n)
            .map(|k| {
                let mut e = DVector::zeros(n);
                e[k] = c(1.0);
                e
            })
            .collect();
        for _ in 0..RANDOM_SAMPLES {
            let v = DVector::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let norm = v.norm();
            if norm > 0.0 {
                samples.push(v / c(norm));
            }
        }
        let values: Vec<f64> = samples.iter().map(|u| dissipation(y, &jumps, escape.as_ref(), u)).collect();
        let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if n > 0 && worst > tol {
            return Err(KatoError::Dissipativity { worst, tol });
        }
        let equality_case = values.iter().all(|v| v.abs() <= tol);
        Ok(Self {
            pair: GeneratorPair::Lindblad(pair),
            equality_case,
            worst: if n == 0 { 0.0 } else { worst },
            tol,
        })
    }

    fn lp(&self) -> &LindbladPair {
        match &self.pair {
            GeneratorPair::Lindblad(lp) => lp,
            _ => unreachable!(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lp().dim()
    }

    pub fn y(&self) -> &DMatrix<C64> {
        self.lp().y()
    }

    pub fn jumps(&self) -> impl Iterator<Item = &DMatrix<C64>> {
        self.lp().jumps()
    }

    /// `Y + Y* + Σ L*L = 0` on every sample.
    pub fn equality_case(&self) -> bool {
        self.equality_case
    }

    /// Largest sampled value of `2Re⟨u,Yu⟩ + Σ‖Lu‖²`.
    pub fn worst_dissipation(&self) -> f64 {
        self.worst
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn pair(&self) -> &GeneratorPair {
        &self.pair
    }

    pub fn into_pair(self) -> GeneratorPair {
        self.pair
    }

    /// `(A + B)ρ = Yρ + ρY* + Σ LρL*` on an arbitrary (not necessarily
    /// Hermitian) matrix.
    pub fn apply_generator(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let lp = self.lp();
        let mut out = lp.apply_a(rho);
        for l in lp.jumps() {
            out += l * rho * l.adjoint();
        }
        out
    }

    /// `Υ(x) = Y*x + xY + Σ L*xL` as a matrix, `Υ(x)_ij = Υ(x)[eᵢ,eⱼ]`.
    pub fn upsilon_matrix(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let lp = self.lp();
        lp.y().adjoint() * x + x * lp.y() + lp.adjoint_b(x)
    }
}

/// Validated [`GeneratorPair`] for `Aρ = Yρ + ρY*`, `Bρ = Σ LρL*`.
pub fn build_lindblad_pair(y: DMatrix<C64>, jumps: Vec<DMatrix<C64>>) -> Result<GeneratorPair> {
    Ok(LindbladModel::new(y, jumps)?.into_pair())
}

/// `Υ(x)[v,u] = ⟨v,xYu⟩ + ⟨Yv,xu⟩ + Σ⟨Lv,xLu⟩`.
pub fn upsilon_form(model: &LindbladModel, x: &DMatrix<C64>, v: &DVector<C64>, u: &DVector<C64>) -> C64 {
    let y = model.y();
    let mut acc = v.dotc(&(x * (y * u))) + (y * v).dotc(&(x * u));
    for l in model.jumps() {
        acc += (l * v).dotc(&(x * (l * u)));
    }
    acc
}

fn dual(model: &LindbladModel, x: &DMatrix<C64>) -> Result<DualVector> {
    let f = DualVector::matrix(x.clone())?;
    model.pair.check_dual(&f)?;
    Ok(f)
}

/// `Q_λ(x) = (BR(λ,A))* x`.
pub fn q_lambda(model: &LindbladModel, lambda: f64, x: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let f = dual(model, x)?;
    Ok(model.pair.at(lambda)?.adjoint_br(&f)?.mat().clone())
}

/// `P_λ(x) = R(λ,A)* x`.
pub fn p_lambda(model: &LindbladModel, lambda: f64, x: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let f = dual(model, x)?;
    Ok(model.pair.at(lambda)?.adjoint_resolvent(&f)?.mat().clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservativityIterates {
    /// Smallest eigenvalue of `Q_λⁿ(𝟙)`, `n = 0..=n_max`.
    pub min_eigenvalue: Series,
    pub trace: Series,
    /// `⟨e₀, Q_λⁿ(𝟙) e₀⟩`.
    pub origin: Series,
}

/// `Q_λⁿ(𝟙)` for `n = 0..=n_max`.
pub fn conservativity_iterates(model: &LindbladModel, lambda: f64, n_max: usize) -> Result<ConservativityIterates> {
    let at = model.pair.at(lambda)?;
    let n = model.dim();
    let mut w = DualVector::unit(Mode::Matrix, n);
    let (mut mins, mut traces, mut origin) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..=n_max {
        if k > 0 {
            w = at.adjoint_br_unchecked(&w);
        }
        let m = w.mat();
        mins.push(hermitian_eigenvalues(m).first().copied().unwrap_or(0.0));
        traces.push(m.diagonal().iter().map(|z| z.re).sum());
        origin.push(if n > 0 { m[(0, 0)].re } else { 0.0 });
    }
    Ok(ConservativityIterates {
        min_eigenvalue: Series::new(0, mins),
        trace: Series::new(0, traces),
        origin: Series::new(0, origin),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSample {
    /// `‖Υ(x) − λx‖_F / ‖x‖_F`.
    pub upsilon_residual: f64,
    /// `‖Q_λ(x) − x‖_F / ‖x‖_F`.
    pub q_residual: f64,
    /// `‖(Q_λ(x) − x) − P_λ(Υ(x) − λx)‖_F / ‖x‖_F`.
    pub identity_residual: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub samples: Vec<FixedPointSample>,
    /// `σ_min(I − Q_λ)` when the assembly fits under the cap.
    pub kernel_margin: Option<f64>,
    pub all_consistent: bool,
    /// Samples where both residuals vanish.
    pub witnesses: usize,
}

/// Compares `Υ(x) = λx` with `Q_λ(x) = x` on the samples. Both residuals
/// are linked exactly by `Q_λ(x) − x = P_λ(Υ(x) − λx)`.
pub fn form_fixed_point_check(model: &LindbladModel, lambda: f64, samples: &[DMatrix<C64>], tol: f64) -> Result<FixedPointReport> {
    let at = model.pair.at(lambda)?;
    let mut out = Vec::with_capacity(samples.len());
    let mut witnesses = 0;
    for x in samples {
        let f = dual(model, x)?;
        let xs = f.mat();
        let scale = xs.norm();
        if scale == 0.0 {
            out.push(FixedPointSample {
                upsilon_residual: 0.0,
                q_residual: 0.0,
                identity_residual: 0.0,
                consistent: true,
            });
            continue;
        }
        let ups = model.upsilon_matrix(xs) - xs * c(lambda);
        let q = at.adjoint_br_unchecked(&f).mat() - xs;
        let p = at.adjoint_resolvent_unchecked(&DualVector::from_matrix_unchecked(&ups));
        let ident = (&q - p.mat()).norm() / scale;
        let (ru, rq) = (ups.norm() / scale, q.norm() / scale);
        let consistent = (ru < tol) == (rq < tol);
        if ru < tol && rq < tol {
            witnesses += 1;
        }
        out.push(FixedPointSample {
            upsilon_residual: ru,
            q_residual: rq,
            identity_residual: ident,
            consistent,
        });
    }
    let kernel_margin = match margin_at(&at) {
        Ok(m) => Some(m),
        Err(KatoError::SizeExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(FixedPointReport {
        all_consistent: out.iter().all(|s| s.consistent),
        samples: out,
        kernel_margin,
        witnesses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalReport {
    pub max_deviation: f64,
    pub quantum: Vec<f64>,
    pub classical: Vec<f64>,
}

/// Evolves `diag(p)` under the quantum model and `p` under the classical
/// twin with the same Euler scheme and compares populations.
pub fn diagonal_restriction_check(model: &LindbladModel, twin: &GeneratorPair, t: f64, p: &[f64], n_steps: usize) -> Result<DiagonalReport> {
    if twin.mode() != Mode::Sequence || twin.dim() != model.dim() {
        return Err(KatoError::Validation("classical twin must be a sequence model of the same dimension".into()));
    }
    let rho = StateVector::diagonal(p)?;
    let seq = StateVector::sequence(p.to_vec())?;
    let q = semigroup_apply(&model.pair, t, &rho, n_steps, &SeriesOptions::for_mode(Mode::Matrix))?;
    let cl = semigroup_apply(twin, t, &seq, n_steps, &SeriesOptions::for_mode(Mode::Sequence))?;
    let quantum = q.populations();
    let classical = cl.populations();
    let mut dev = quantum.iter().zip(&classical).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    // off-diagonal leakage also counts
    let m = q.mat();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                dev = dev.max(m[(i, j)].norm());
            }
        }
    }
    Ok(DiagonalReport {
        max_deviation: dev,
        quantum,
        classical,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiReport {
    pub min_eigenvalue: f64,
    pub psd: bool,
}

/// Choi matrix `Σ_ij E_ij ⊗ S(t)E_ij` of the Euler-approximated channel,
/// with `E_ij` split into Hermitian parts.
pub fn choi_matrix(model: &LindbladModel, t: f64, n_steps: usize) -> Result<DMatrix<C64>> {
    let n = model.dim();
    if n > CHOI_MAX_DIM {
        return Err(KatoError::SizeExceeded { size: n, cap: CHOI_MAX_DIM });
    }
    let opts = SeriesOptions::for_mode(Mode::Matrix);
    let evolve = |h: DMatrix<C64>| -> Result<DMatrix<C64>> {
        Ok(semigroup_apply(&model.pair, t, &StateVector::from_matrix_unchecked(&h), n_steps, &opts)?.mat().clone())
    };
    let mut images: Vec<Vec<DMatrix<C64>>> = vec![vec![DMatrix::zeros(n, n); n]; n];
    for i in 0..n {
        for j in i..n {
            if i == j {
                let mut e = DMatrix::zeros(n, n);
                e[(i, i)] = c(1.0);
                images[i][i] = evolve(e)?;
                continue;
            }
            // E_ij = H₁ + iH₂, H₁ = (E_ij + E_ji)/2, H₂ = (E_ij − E_ji)/(2i)
            let mut h1 = DMatrix::zeros(n, n);
            h1[(i, j)] = c(0.5);
            h1[(j, i)] = c(0.5);
            let mut h2 = DMatrix::zeros(n, n);
            h2[(i, j)] = C64::new(0.0, -0.5);
            h2[(j, i)] = C64::new(0.0, 0.5);
            let (s1, s2) = (evolve(h1)?, evolve(h2)?);
            let i_unit = C64::new(0.0, 1.0);
            images[i][j] = &s1 + &s2 * i_unit;
            images[j][i] = &s1 - &s2 * i_unit;
        }
    }
    let mut choi = DMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let img = &images[i][j];
            for a in 0..n {
                for b in 0..n {
                    choi[(i * n + a, j * n + b)] = img[(a, b)];
                }
            }
        }
    }
    Ok(choi)
}

/// Whether the Choi matrix of `S(t)` is PSD within `−1e-8`.
pub fn choi_cp_check(model: &LindbladModel, t: f64, n_steps: usize) -> Result<ChoiReport> {
    let choi = choi_matrix(model, t, n_steps)?;
    let min = hermitian_eigenvalues(&crate::state_space::symmetrize(&choi)).first().copied().unwrap_or(0.0);
    Ok(ChoiReport {
        min_eigenvalue: min,
        psd: min >= -CHOI_PSD_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaChoice {
    /// `σ ≡ 1`
    One,
    /// `σ(x) = −i e^{ix}`
    Phase,
}

impl SigmaChoice {
    fn eval(self, x: f64) -> C64 {
        match self {
            SigmaChoice::One => c(1.0),
            SigmaChoice::Phase => C64::new(0.0, -1.0) * C64::new(x.cos(), x.sin()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SsqdsModel {
    pub model: LindbladModel,
    pub grid: Vec<f64>,
    pub spacing: f64,
    /// Spectral norm of the Hermitian correction `S` subtracted (halved)
    /// from the naive `Y`.
    pub correction_norm: f64,
}

/// Periodic central differences on `M` points `x_j = j·h`:
/// `L = diag(σ)D₁`, `Y₀ = ½ diag(σ²) D₂` and `Y = Y₀ − ½S` with
/// `S = Y₀ + Y₀* + L*L`, so that `Y + Y* + L*L = 0` holds exactly.
pub fn discretize_ssqds(m: usize, sigma: SigmaChoice, h: f64) -> Result<SsqdsModel> {
    if m < 8 {
        return Err(KatoError::Validation(format!("SsQDS grid needs at least 8 points, got {m}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(KatoError::Validation(format!("grid spacing must be positive, got {h}")));
    }
    let grid: Vec<f64> = (0..m).map(|j| j as f64 * h).collect();
    let mut d1 = DMatrix::<C64>::zeros(m, m);
    let mut d2 = DMatrix::<C64>::zeros(m, m);
    for j in 0..m {
        let (l, r) = ((j + m - 1) % m, (j + 1) % m);
        d1[(j, r)] += c(0.5 / h);
        d1[(j, l)] -= c(0.5 / h);
        d2[(j, r)] += c(1.0 / (h * h));
        d2[(j, l)] += c(1.0 / (h * h));
        d2[(j, j)] -= c(2.0 / (h * h));
    }
    let s: Vec<C64> = grid.iter().map(|&x| sigma.eval(x)).collect();
    let l = DMatrix::from_fn(m, m, |i, j| s[i] * d1[(i, j)]);
    let y0 = DMatrix::from_fn(m, m, |i, j| c(0.5) * s[i] * s[i] * d2[(i, j)]);
    let corr = &y0 + y0.adjoint() + l.adjoint() * &l;
    let corr = crate::state_space::symmetrize(&corr);
    let correction_norm = hermitian_eigenvalues(&corr).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let y = &y0 - &corr * c(0.5);
    let model = LindbladModel::new(y, vec![l])?;
    Ok(SsqdsModel {
        model,
        grid,
        spacing: h,
        correction_norm,
    })
}

/// Normalised Gaussian `ψ(x) ∝ exp(−(x − x_c)²/0.5)` centred on the grid.
pub fn ssqds_probe(ss: &SsqdsModel) -> Vec<[f64; 2]> {
    let m = ss.grid.len();
    let centre = 0.5 * m as f64 * ss.spacing;
    let raw: Vec<f64> = ss.grid.iter().map(|&x| (-(x - centre).powi(2) / 0.5).exp()).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| [v / norm, 0.0]).collect()
}

/// `⟨ψ, Q_λⁿ(𝟙) ψ⟩` with the Gaussian probe.
pub fn ssqds_indicator(ss: &SsqdsModel, lambda: f64, n: usize) -> Result<f64> {
    let at = ss.model.pair.at(lambda)?;
    let series = dual_power_at(&at, &[Probe::Expectation(ssqds_probe(ss))], n)?;
    Ok(series[0].series.last().unwrap_or(0.0))
}
