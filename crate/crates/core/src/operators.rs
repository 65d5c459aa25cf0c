//! Generator pairs `(A, B)` and the lazy operators built from them: the
//! unperturbed resolvent `R(λ,A)`, the perturbation `B`, the composition
//! `BR(λ,A)` and its adjoint.
//!
//! Vectorisation convention for superoperators is column stacking
//! (`vec(ρ)[i + N·j] = ρ_ij`); it is only materialised when a dense matrix
//! of a map is assembled.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KatoError, Result};
use crate::lyapunov::LyapunovSolver;
use crate::state_space::{hermitian_eigenvalues, DualVector, Mode, StateVector, C64};

/// How a birth–death truncation treats the birth transition out of the
/// last retained state `N − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Keep the outflow in `A` and drop the transition from `B`: mass that
    /// would enter state `N` leaves the truncated system.
    #[default]
    Absorb,
    /// Remove the outflow from `A` as well: the edge state retains its mass.
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    BirthDeath,
    Lindblad,
    PotentialWrapped,
}

/// Birth–death chain on `{0, …, N−1}` with birth `a_k`, death `b_k` and
/// extra loss `c_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeath {
    birth: Vec<f64>,
    death: Vec<f64>,
    loss: Vec<f64>,
    boundary: Boundary,
    outflow: Vec<f64>,
}

fn check_rates(name: &str, rates: &[f64]) -> Result<()> {
    for (k, &r) in rates.iter().enumerate() {
        if !r.is_finite() {
            return Err(KatoError::Validation(format!("{name} rate at k = {k} is not finite")));
        }
        if r < 0.0 {
            return Err(KatoError::NegativeRate { index: k, value: r });
        }
    }
    Ok(())
}

impl BirthDeath {
    pub fn new(birth: Vec<f64>, death: Vec<f64>, loss: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let n = birth.len();
        if n == 0 {
            return Err(KatoError::Validation("truncation must have at least one state".into()));
        }
        for (name, v) in [("death", &death), ("loss", &loss)] {
            if v.len() != n {
                return Err(KatoError::Validation(format!(
                    "{name} rates have length {}, expected {n}",
                    v.len()
                )));
            }
        }
        check_rates("birth", &birth)?;
        check_rates("death", &death)?;
        check_rates("loss", &loss)?;
        let outflow = (0..n)
            .map(|k| {
                let a = if boundary == Boundary::Reflect && k == n - 1 { 0.0 } else { birth[k] };
                a + death[k] + loss[k]
            })
            .collect();
        Ok(Self {
            birth,
            death,
            loss,
            boundary,
            outflow,
        })
    }

    /// Pure birth chain `A = diag(−a_k)`, `B` = subdiagonal `a_k`.
    pub fn pure_birth(birth: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let n = birth.len();
        Self::new(birth, vec![0.0; n], vec![0.0; n], boundary)
    }

    pub fn dim(&self) -> usize {
        self.birth.len()
    }

    pub fn birth(&self) -> &[f64] {
        &self.birth
    }

    pub fn death(&self) -> &[f64] {
        &self.death
    }

    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Diagonal of `−A`.
    pub fn outflow(&self) -> &[f64] {
        &self.outflow
    }

    fn with_extra_loss(&self, extra: &[f64]) -> Result<Self> {
        let loss = self.loss.iter().zip(extra).map(|(c, k)| c + k).collect();
        Self::new(self.birth.clone(), self.death.clone(), loss, self.boundary)
    }

    fn apply_b(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        for k in 0..n {
            let x = v[k];
            if x == 0.0 {
                continue;
            }
            if k + 1 < n {
                out[k + 1] += self.birth[k] * x;
            }
            if k >= 1 {
                out[k - 1] += self.death[k] * x;
            }
        }
        out
    }

    fn adjoint_b(&self, f: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(n, |k, _| {
            let up = if k + 1 < n { self.birth[k] * f[k + 1] } else { 0.0 };
            let down = if k >= 1 { self.death[k] * f[k - 1] } else { 0.0 };
            up + down
        })
    }

    /// Loss functional `−⟨Ψ, Av + Bv⟩` of the untruncated chain: the birth
    /// transition out of `N − 1` counts as retained mass, death out of state
    /// `0` and the `c_k` rates count as loss.
    fn loss_functional(&self, v: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.dim() {
            let rate = self.loss[k] + if k == 0 { self.death[0] } else { 0.0 };
            acc += rate * v[k];
        }
        acc
    }
}

/// One Lindblad jump operator with an optional sparse copy used when the
/// matrix is mostly zeros.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Jump {
    pub(crate) dense: DMatrix<C64>,
    sparse: Option<Vec<(usize, usize, C64)>>,
}

impl Jump {
    pub(crate) fn new(dense: DMatrix<C64>) -> Self {
        let n = dense.nrows();
        let entries: Vec<(usize, usize, C64)> = (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .filter_map(|(i, j)| {
                let z = dense[(i, j)];
                (z.re != 0.0 || z.im != 0.0).then_some((i, j, z))
            })
            .collect();
        let sparse = (entries.len() * 8 <= n * n).then_some(entries);
        Self { dense, sparse }
    }

    /// `L ρ L*`
    fn conjugate(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        match &self.sparse {
            Some(entries) => {
                for &(a, i, la) in entries {
                    for &(b, j, lb) in entries {
                        let r = rho[(i, j)];
                        if r.re != 0.0 || r.im != 0.0 {
                            out[(a, b)] += la * r * lb.conj();
                        }
                    }
                }
            }
            None => *out += &self.dense * rho * self.dense.adjoint(),
        }
    }

    /// `L* x L`
    fn conjugate_adjoint(&self, x: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        match &self.sparse {
            Some(entries) => {
                for &(a, i, la) in entries {
                    for &(b, j, lb) in entries {
                        let r = x[(a, b)];
                        if r.re != 0.0 || r.im != 0.0 {
                            out[(i, j)] += la.conj() * r * lb;
                        }
                    }
                }
            }
            None => *out += self.dense.adjoint() * x * &self.dense,
        }
    }
}

/// Lindblad pair on `N × N` Hermitian matrices: `Aρ = Yρ + ρY*`,
/// `Bρ = Σ Lₗ ρ Lₗ*`.
///
/// `escape = Σ E*E` collects jumps that leave a truncated space. They are
/// absent from `B` and, like the classical absorbing edge, not counted by
/// the loss functional: their flux is the escape to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladPair {
    y: DMatrix<C64>,
    jumps: Vec<Jump>,
    escape: Option<DMatrix<C64>>,
    /// `Y + Y* + Σ L*L + escape`, so that the loss is `−Tr(Dρ)`.
    dissipator: DMatrix<C64>,
}

impl LindbladPair {
    /// Assembles the pair without the dissipativity check; see
    /// [`crate::quantum::LindbladModel`] for the validated constructor.
    pub(crate) fn new_unchecked(y: DMatrix<C64>, jumps: Vec<DMatrix<C64>>) -> Result<Self> {
        let n = y.nrows();
        if y.ncols() != n {
            return Err(KatoError::Validation("Y must be square".into()));
        }
        for (l, m) in jumps.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(KatoError::Validation(format!(
                    "jump operator {l} has shape {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let finite = |m: &DMatrix<C64>| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite(&y) || !jumps.iter().all(finite) {
            return Err(KatoError::Validation("non-finite entries in Y or L".into()));
        }
        Ok(Self::assemble(y, jumps.into_iter().map(Jump::new).collect(), None))
    }

    fn assemble(y: DMatrix<C64>, jumps: Vec<Jump>, escape: Option<DMatrix<C64>>) -> Self {
        let mut d = &y + y.adjoint();
        for j in &jumps {
            d += j.dense.adjoint() * &j.dense;
        }
        if let Some(e) = &escape {
            d += e;
        }
        Self {
            y,
            jumps,
            escape,
            dissipator: d,
        }
    }

    pub(crate) fn with_escape(self, escape: DMatrix<C64>) -> Result<Self> {
        let n = self.dim();
        if escape.nrows() != n || escape.ncols() != n {
            return Err(KatoError::Validation(format!("escape term must be {n}x{n}")));
        }
        Ok(Self::assemble(self.y, self.jumps, Some(escape)))
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn escape(&self) -> Option<&DMatrix<C64>> {
        self.escape.as_ref()
    }

    pub fn y(&self) -> &DMatrix<C64> {
        &self.y
    }

    pub fn jumps(&self) -> impl Iterator<Item = &DMatrix<C64>> {
        self.jumps.iter().map(|j| &j.dense)
    }

    pub(crate) fn apply_a(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        &self.y * rho + rho * self.y.adjoint()
    }

    pub(crate) fn apply_b(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in &self.jumps {
            j.conjugate(rho, &mut out);
        }
        out
    }

    pub(crate) fn adjoint_b(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in &self.jumps {
            j.conjugate_adjoint(x, &mut out);
        }
        out
    }

    fn loss_functional(&self, rho: &DMatrix<C64>) -> f64 {
        // Tr(Dρ) = Σ_ij D_ij ρ_ji
        let n = self.dim();
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                acc += (self.dissipator[(i, j)] * rho[(j, i)]).re;
            }
        }
        -acc
    }

    fn with_potential(&self, k: &DMatrix<C64>) -> Self {
        Self::assemble(&self.y - k, self.jumps.clone(), self.escape.clone())
    }
}

/// Bounded positive potential `K` subtracted from `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// Multiplication by `K_k ≥ 0` on a sequence space.
    Diagonal(Vec<f64>),
    /// Positive semidefinite `K`, acting as `ρ ↦ Kρ + ρK`.
    Hermitian(DMatrix<C64>),
}

impl Potential {
    /// `K = κ·I` in the given mode.
    pub fn scalar(mode: Mode, dim: usize, kappa: f64) -> Self {
        match mode {
            Mode::Sequence => Potential::Diagonal(vec![kappa; dim]),
            Mode::Matrix => Potential::Hermitian(DMatrix::identity(dim, dim) * C64::new(kappa, 0.0)),
        }
    }

    fn validate(&self, mode: Mode, dim: usize) -> Result<()> {
        match (self, mode) {
            (Potential::Diagonal(k), Mode::Sequence) => {
                if k.len() != dim {
                    return Err(KatoError::DimensionMismatch {
                        expected: dim,
                        actual: k.len(),
                    });
                }
                check_rates("potential", k)
            }
            (Potential::Hermitian(k), Mode::Matrix) => {
                if k.nrows() != dim || k.ncols() != dim {
                    return Err(KatoError::DimensionMismatch {
                        expected: dim,
                        actual: k.nrows(),
                    });
                }
                let kv = StateVector::matrix(k.clone())?;
                let min = hermitian_eigenvalues(kv.mat()).first().copied().unwrap_or(0.0);
                if min < -1e-12 {
                    return Err(KatoError::Validation(format!(
                        "potential has negative eigenvalue {min:e}"
                    )));
                }
                Ok(())
            }
            (_, mode) => Err(KatoError::ModeMismatch {
                expected: mode.name(),
                actual: match self {
                    Potential::Diagonal(_) => "sequence",
                    Potential::Hermitian(_) => "matrix",
                },
            }),
        }
    }
}

/// `(A − K, B)` for a base pair `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialWrapped {
    base: Box<GeneratorPair>,
    potential: Potential,
    effective: Box<GeneratorPair>,
}

impl PotentialWrapped {
    pub fn base(&self) -> &GeneratorPair {
        &self.base
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }
}

/// A generator pair satisfying the hypotheses of Kato's perturbation
/// theorem on a truncated state space.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorPair {
    BirthDeath(BirthDeath),
    Lindblad(LindbladPair),
    PotentialWrapped(PotentialWrapped),
}

impl From<BirthDeath> for GeneratorPair {
    fn from(bd: BirthDeath) -> Self {
        GeneratorPair::BirthDeath(bd)
    }
}

impl GeneratorPair {
    pub fn wrap_potential(base: GeneratorPair, potential: Potential) -> Result<Self> {
        potential.validate(base.mode(), base.dim())?;
        let effective = match (base.effective(), &potential) {
            (GeneratorPair::BirthDeath(bd), Potential::Diagonal(k)) => GeneratorPair::BirthDeath(bd.with_extra_loss(k)?),
            (GeneratorPair::Lindblad(lp), Potential::Hermitian(k)) => GeneratorPair::Lindblad(lp.with_potential(k)),
            _ => unreachable!("validated above"),
        };
        Ok(GeneratorPair::PotentialWrapped(PotentialWrapped {
            base: Box::new(base),
            potential,
            effective: Box::new(effective),
        }))
    }

    /// The concrete pair that carries out the computations.
    pub(crate) fn effective(&self) -> &GeneratorPair {
        match self {
            GeneratorPair::PotentialWrapped(w) => w.effective.effective(),
            other => other,
        }
    }

    pub fn kind(&self) -> GeneratorKind {
        match self {
            GeneratorPair::BirthDeath(_) => GeneratorKind::BirthDeath,
            GeneratorPair::Lindblad(_) => GeneratorKind::Lindblad,
            GeneratorPair::PotentialWrapped(_) => GeneratorKind::PotentialWrapped,
        }
    }

    pub fn mode(&self) -> Mode {
        match self.effective() {
            GeneratorPair::BirthDeath(_) => Mode::Sequence,
            _ => Mode::Matrix,
        }
    }

    pub fn dim(&self) -> usize {
        match self.effective() {
            GeneratorPair::BirthDeath(bd) => bd.dim(),
            GeneratorPair::Lindblad(lp) => lp.dim(),
            GeneratorPair::PotentialWrapped(_) => unreachable!(),
        }
    }

    pub(crate) fn check_state(&self, v: &StateVector) -> Result<()> {
        v.check_compatible(self.mode(), self.dim())
    }

    pub(crate) fn check_dual(&self, f: &DualVector) -> Result<()> {
        if f.mode() != self.mode() {
            return Err(KatoError::ModeMismatch {
                expected: self.mode().name(),
                actual: f.mode().name(),
            });
        }
        if f.dim() != self.dim() {
            return Err(KatoError::DimensionMismatch {
                expected: self.dim(),
                actual: f.dim(),
            });
        }
        Ok(())
    }

    /// Explicit action of `A` on a (domain) vector.
    pub fn apply_a(&self, v: &StateVector) -> Result<StateVector> {
        self.check_state(v)?;
        Ok(match self.effective() {
            GeneratorPair::BirthDeath(bd) => {
                StateVector::from_dvector(DVector::from_fn(bd.dim(), |k, _| -bd.outflow[k] * v.seq()[k]))
            }
            GeneratorPair::Lindblad(lp) => StateVector::from_matrix_unchecked(&lp.apply_a(v.mat())),
            GeneratorPair::PotentialWrapped(_) => unreachable!(),
        })
    }

    /// `Bv`; positive for positive `v`.
    pub fn apply_b(&self, v: &StateVector) -> Result<StateVector> {
        self.check_state(v)?;
        Ok(self.apply_b_unchecked(v))
    }

    pub(crate) fn apply_b_unchecked(&self, v: &StateVector) -> StateVector {
        match self.effective() {
            GeneratorPair::BirthDeath(bd) => StateVector::from_dvector(bd.apply_b(v.seq())),
            GeneratorPair::Lindblad(lp) => StateVector::from_matrix_unchecked(&lp.apply_b(v.mat())),
            GeneratorPair::PotentialWrapped(_) => unreachable!(),
        }
    }

    pub(crate) fn adjoint_b_unchecked(&self, f: &DualVector) -> DualVector {
        match self.effective() {
            GeneratorPair::BirthDeath(bd) => DualVector::from_dvector(bd.adjoint_b(f.seq())),
            GeneratorPair::Lindblad(lp) => DualVector::from_matrix_unchecked(&lp.adjoint_b(f.mat())),
            GeneratorPair::PotentialWrapped(_) => unreachable!(),
        }
    }

    /// Loss functional `a(v) = −⟨Ψ, Av + Bv⟩`.
    pub fn loss_functional(&self, v: &StateVector) -> Result<f64> {
        self.check_state(v)?;
        Ok(self.loss_functional_unchecked(v))
    }

    pub(crate) fn loss_functional_unchecked(&self, v: &StateVector) -> f64 {
        match self.effective() {
            GeneratorPair::BirthDeath(bd) => bd.loss_functional(v.seq()),
            GeneratorPair::Lindblad(lp) => lp.loss_functional(v.mat()),
            GeneratorPair::PotentialWrapped(_) => unreachable!(),
        }
    }

    /// Binds the pair to a spectral parameter, factorising whatever the
    /// resolvent needs once.
    pub fn at(&self, lambda: f64) -> Result<ResolventAt<'_>> {
        ResolventAt::new(self, lambda)
    }
}

#[derive(Debug, Clone)]
enum Solver {
    Diagonal(Vec<f64>),
    Lyapunov(LyapunovSolver),
}

/// `(A, B)` bound to a fixed `λ > 0`.
#[derive(Debug, Clone)]
pub struct ResolventAt<'g> {
    gen: &'g GeneratorPair,
    lambda: f64,
    solver: Solver,
}

impl<'g> ResolventAt<'g> {
    fn new(gen: &'g GeneratorPair, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(KatoError::InvalidLambda(lambda));
        }
        let solver = match gen.effective() {
            GeneratorPair::BirthDeath(bd) => Solver::Diagonal(bd.outflow.iter().map(|d| 1.0 / (lambda + d)).collect()),
            GeneratorPair::Lindblad(lp) => Solver::Lyapunov(LyapunovSolver::new(&lp.y, lambda)?),
            GeneratorPair::PotentialWrapped(_) => unreachable!(),
        };
        Ok(Self { gen, lambda, solver })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn generator(&self) -> &'g GeneratorPair {
        self.gen
    }

    /// Conditioning proxy for Matrix-mode solves; `None` for diagonal `A`.
    pub fn separation(&self) -> Option<f64> {
        match &self.solver {
            Solver::Diagonal(_) => None,
            Solver::Lyapunov(s) => Some(s.separation()),
        }
    }

    /// `R(λ,A)v`.
    pub fn resolvent(&self, v: &StateVector) -> Result<StateVector> {
        self.gen.check_state(v)?;
        Ok(self.resolvent_unchecked(v))
    }

    pub(crate) fn resolvent_unchecked(&self, v: &StateVector) -> StateVector {
        match &self.solver {
            Solver::Diagonal(inv) => StateVector::from_dvector(DVector::from_fn(inv.len(), |k, _| inv[k] * v.seq()[k])),
            Solver::Lyapunov(s) => StateVector::from_matrix_unchecked(&s.solve(v.mat())),
        }
    }

    /// `P_λ f = R(λ,A)* f`.
    pub fn adjoint_resolvent(&self, f: &DualVector) -> Result<DualVector> {
        self.gen.check_dual(f)?;
        Ok(self.adjoint_resolvent_unchecked(f))
    }

    pub(crate) fn adjoint_resolvent_unchecked(&self, f: &DualVector) -> DualVector {
        match &self.solver {
            Solver::Diagonal(inv) => DualVector::from_dvector(DVector::from_fn(inv.len(), |k, _| inv[k] * f.seq()[k])),
            Solver::Lyapunov(s) => DualVector::from_matrix_unchecked(&s.solve_adjoint(f.mat())),
        }
    }

    /// `BR(λ,A)v`.
    pub fn apply_br(&self, v: &StateVector) -> Result<StateVector> {
        self.gen.check_state(v)?;
        Ok(self.apply_br_unchecked(v))
    }

    pub(crate) fn apply_br_unchecked(&self, v: &StateVector) -> StateVector {
        self.gen.apply_b_unchecked(&self.resolvent_unchecked(v))
    }

    /// `(BR(λ,A))* f = R(λ,A)* B* f`; in Matrix mode this is `Q_λ`.
    pub fn adjoint_br(&self, f: &DualVector) -> Result<DualVector> {
        self.gen.check_dual(f)?;
        Ok(self.adjoint_br_unchecked(f))
    }

    pub(crate) fn adjoint_br_unchecked(&self, f: &DualVector) -> DualVector {
        self.adjoint_resolvent_unchecked(&self.gen.adjoint_b_unchecked(f))
    }

    pub fn resolvent_handle(&self) -> ResolventHandle<'_, 'g> {
        ResolventHandle(self)
    }

    pub fn br_handle(&self) -> BrHandle<'_, 'g> {
        BrHandle(self)
    }
}

/// Lazily applied linear map on a truncated state space.
pub trait OperatorHandle {
    fn mode(&self) -> Mode;
    fn dim(&self) -> usize;
    fn apply(&self, v: &StateVector) -> Result<StateVector>;
    fn adjoint_apply(&self, f: &DualVector) -> Result<DualVector>;
    fn description(&self) -> String;
    /// Whether the map sends the positive cone into itself.
    fn positivity_preserving(&self) -> bool {
        true
    }
}

/// `R(λ,A)` as an [`OperatorHandle`].
#[derive(Debug, Clone, Copy)]
pub struct ResolventHandle<'r, 'g>(&'r ResolventAt<'g>);

/// `BR(λ,A)` as an [`OperatorHandle`].
#[derive(Debug, Clone, Copy)]
pub struct BrHandle<'r, 'g>(&'r ResolventAt<'g>);

impl OperatorHandle for ResolventHandle<'_, '_> {
    fn mode(&self) -> Mode {
        self.0.gen.mode()
    }
    fn dim(&self) -> usize {
        self.0.gen.dim()
    }
    fn apply(&self, v: &StateVector) -> Result<StateVector> {
        self.0.resolvent(v)
    }
    fn adjoint_apply(&self, f: &DualVector) -> Result<DualVector> {
        self.0.adjoint_resolvent(f)
    }
    fn description(&self) -> String {
        format!("R({}, A)", self.0.lambda)
    }
}

impl OperatorHandle for BrHandle<'_, '_> {
    fn mode(&self) -> Mode {
        self.0.gen.mode()
    }
    fn dim(&self) -> usize {
        self.0.gen.dim()
    }
    fn apply(&self, v: &StateVector) -> Result<StateVector> {
        self.0.apply_br(v)
    }
    fn adjoint_apply(&self, f: &DualVector) -> Result<DualVector> {
        self.0.adjoint_br(f)
    }
    fn description(&self) -> String {
        format!("B R({}, A)", self.0.lambda)
    }
}

/// `R(λ,A)v`.
pub fn resolvent_a(gen: &GeneratorPair, lambda: f64, v: &StateVector) -> Result<StateVector> {
    gen.at(lambda)?.resolvent(v)
}

/// `Bv`.
pub fn apply_b(gen: &GeneratorPair, v: &StateVector) -> Result<StateVector> {
    gen.apply_b(v)
}

/// `BR(λ,A)v`.
pub fn apply_br(gen: &GeneratorPair, lambda: f64, v: &StateVector) -> Result<StateVector> {
    gen.at(lambda)?.apply_br(v)
}

/// `(BR(λ,A))* f`.
pub fn adjoint_br(gen: &GeneratorPair, lambda: f64, f: &DualVector) -> Result<DualVector> {
    gen.at(lambda)?.adjoint_br(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_space::pair;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn quadratic_birth(n: usize) -> GeneratorPair {
        BirthDeath::pure_birth((0..n).map(|k| ((k + 1) * (k + 1)) as f64).collect(), Boundary::Absorb)
            .unwrap()
            .into()
    }

    /// Y = −½|1⟩⟨1|, L = |0⟩⟨1|
    fn amplitude_damping() -> GeneratorPair {
        let mut y = DMatrix::zeros(2, 2);
        y[(1, 1)] = c(-0.5);
        let mut l = DMatrix::zeros(2, 2);
        l[(0, 1)] = c(1.0);
        GeneratorPair::Lindblad(LindbladPair::new_unchecked(y, vec![l]).unwrap())
    }

    #[test]
    fn birth_resolvent_and_b() {
        let gen = quadratic_birth(5);
        let e0 = StateVector::basis(Mode::Sequence, 5, 0);
        let r = resolvent_a(&gen, 1.0, &e0).unwrap();
        assert_eq!(r.seq()[0], 0.5);
        let b = apply_b(&gen, &e0).unwrap();
        assert_eq!(b.populations(), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        let br = apply_br(&gen, 1.0, &e0).unwrap();
        assert_eq!(br.populations(), vec![0.0, 0.5, 0.0, 0.0, 0.0]);

        let linear: GeneratorPair = BirthDeath::pure_birth((0..5).map(|k| (k + 1) as f64).collect(), Boundary::Absorb)
            .unwrap()
            .into();
        assert_eq!(apply_br(&linear, 1.0, &e0).unwrap().seq()[1], 0.5);
        assert!(resolvent_a(&gen, 1.0, &StateVector::zeros(Mode::Sequence, 5)).unwrap().is_zero());
    }

    #[test]
    fn birth_adjoint_closed_form() {
        let gen = quadratic_birth(6);
        let g = adjoint_br(&gen, 1.0, &DualVector::unit(Mode::Sequence, 6)).unwrap();
        assert_eq!(g.eval(0), 0.5);
        // last state: transition dropped under absorb
        assert_eq!(g.eval(5), 0.0);
        assert!(adjoint_br(&gen, 1.0, &DualVector::zeros(Mode::Sequence, 6)).unwrap().bound() == 0.0);
    }

    #[test]
    fn invalid_lambda() {
        let gen = quadratic_birth(3);
        let e0 = StateVector::basis(Mode::Sequence, 3, 0);
        assert_eq!(resolvent_a(&gen, 0.0, &e0), Err(KatoError::InvalidLambda(0.0)));
        assert!(resolvent_a(&gen, -1.0, &e0).is_err());
    }

    #[test]
    fn negative_rates_rejected() {
        assert!(matches!(
            BirthDeath::pure_birth(vec![1.0, -2.0], Boundary::Absorb),
            Err(KatoError::NegativeRate { index: 1, .. })
        ));
    }

    #[test]
    fn reflect_keeps_edge_mass() {
        let gen: GeneratorPair = BirthDeath::pure_birth(vec![1.0, 1.0, 1.0], Boundary::Reflect).unwrap().into();
        let e2 = StateVector::basis(Mode::Sequence, 3, 2);
        let r = resolvent_a(&gen, 2.0, &e2).unwrap();
        assert_eq!(r.seq()[2], 0.5);
    }

    #[test]
    fn lindblad_examples() {
        let gen = amplitude_damping();
        let one = StateVector::basis(Mode::Matrix, 2, 1);
        let r = resolvent_a(&gen, 1.0, &one).unwrap();
        // oracle: direct 4×4 solve of λX − YX − XY* = v, column stacking
        let y = DMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(-0.5)]);
        let id = DMatrix::<C64>::identity(2, 2);
        let sys = DMatrix::<C64>::identity(4, 4) - id.kronecker(&y) - y.conjugate().kronecker(&id);
        let rhs = nalgebra::DVector::from_vec(vec![c(0.0), c(0.0), c(0.0), c(1.0)]);
        let sol = sys.lu().solve(&rhs).unwrap();
        for j in 0..2 {
            for i in 0..2 {
                assert!((r.mat()[(i, j)] - sol[i + 2 * j]).norm() < 1e-14);
            }
        }
        assert!((r.mat()[(1, 1)].re - 0.5).abs() < 1e-15);

        let b = apply_b(&gen, &one).unwrap();
        assert!(b.max_abs_diff(&StateVector::basis(Mode::Matrix, 2, 0)) < 1e-15);

        let q = adjoint_br(&gen, 1.0, &DualVector::unit(Mode::Matrix, 2)).unwrap();
        let expected = DualVector::matrix(DMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(0.5)])).unwrap();
        assert!(q.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn potential_wrapping() {
        let base = quadratic_birth(4);
        assert!(GeneratorPair::wrap_potential(base.clone(), Potential::Diagonal(vec![0.5, -0.1, 0.0, 0.0])).is_err());
        let wrapped = GeneratorPair::wrap_potential(base.clone(), Potential::scalar(Mode::Sequence, 4, 0.5)).unwrap();
        assert_eq!(wrapped.kind(), GeneratorKind::PotentialWrapped);
        let e0 = StateVector::basis(Mode::Sequence, 4, 0);
        assert_eq!(resolvent_a(&wrapped, 1.0, &e0).unwrap().seq()[0], 1.0 / 2.5);
        // loss functional picks up K
        assert_eq!(wrapped.loss_functional(&e0).unwrap(), 0.5);
        assert!(GeneratorPair::wrap_potential(base, Potential::scalar(Mode::Matrix, 4, 0.5)).is_err());
    }

    #[test]
    fn handles_report_descriptions() {
        let gen = quadratic_birth(3);
        let at = gen.at(2.0).unwrap();
        let h = at.br_handle();
        assert_eq!(h.description(), "B R(2, A)");
        let e0 = StateVector::basis(Mode::Sequence, 3, 0);
        let f = DualVector::unit(Mode::Sequence, 3);
        let lhs = pair(&h.adjoint_apply(&f).unwrap(), &e0).unwrap();
        let rhs = pair(&f, &h.apply(&e0).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-15);
    }
}
