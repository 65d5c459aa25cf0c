//! Truncated abstract state spaces.
//!
//! Two concrete instances are supported: real `ℓ¹` coordinate vectors
//! ([`Mode::Sequence`]) and complex Hermitian trace-class matrices
//! ([`Mode::Matrix`]). In both cases the norm is additive on the positive
//! cone and extends to the linear functional `Ψ` (coordinate sum or trace),
//! exposed here as [`psi_norm`].

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KatoError, Result};

pub type C64 = Complex64;

/// Tolerance used when accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default slack for cone-membership tests.
pub const DEFAULT_POSITIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sequence,
    Matrix,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sequence => "sequence",
            Mode::Matrix => "matrix",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Sequence(DVector<f64>),
    Matrix(DMatrix<C64>),
}

/// Element of a truncated state space.
///
/// Values are immutable once built; Matrix-mode values are always Hermitian
/// (symmetrised at construction).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    repr: Repr,
}

fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn symmetrize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

fn check_square(m: &DMatrix<C64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(KatoError::Validation(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_hermitian(m: &DMatrix<C64>) -> Result<()> {
    check_square(m)?;
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(KatoError::Validation("matrix has non-finite entries".into()));
    }
    let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * scale {
        return Err(KatoError::Validation(format!(
            "matrix is not Hermitian (defect {defect:e})"
        )));
    }
    Ok(())
}

fn is_diagonal(m: &DMatrix<C64>) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || (m[(i, j)].re == 0.0 && m[(i, j)].im == 0.0)))
}

/// Real symmetric embedding `[[Re M, −Im M], [Im M, Re M]]`. Each
/// eigenvalue of `M` appears twice; an eigenvector `(x; y)` corresponds to
/// `x + iy`. The complex Hermitian eigensolver in nalgebra loses accuracy
/// quickly with `N`, the real one does not.
fn real_embedding(m: &DMatrix<C64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub(crate) fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    if is_diagonal(m) {
        let mut ev: Vec<f64> = m.diagonal().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        return ev;
    }
    let mut ev: Vec<f64> = real_embedding(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev.into_iter().step_by(2).collect()
}

/// Fast acceptance of `m ≥ −tol` by a Cholesky factorisation of
/// `m + tol·I`; `false` means undecided.
fn cholesky_accepts(m: &DMatrix<C64>, tol: f64) -> bool {
    let n = m.nrows();
    let shifted = m + DMatrix::<C64>::identity(n, n) * C64::new(tol, 0.0);
    shifted.cholesky().is_some()
}

/// `m = m₊ − m₋` with `m₊, m₋ ≥ 0` and orthogonal supports.
fn hermitian_split(m: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = m.nrows();
    if is_diagonal(m) {
        let part = |sign: f64| DMatrix::from_fn(n, n, |i, j| if i == j { C64::new((sign * m[(i, i)].re).max(0.0), 0.0) } else { C64::new(0.0, 0.0) });
        return (part(1.0), part(-1.0));
    }
    let eig = SymmetricEigen::new(real_embedding(m));
    let build = |sign: f64| {
        let mut out = DMatrix::<C64>::zeros(n, n);
        for (k, &ev) in eig.eigenvalues.iter().enumerate() {
            let w = sign * ev;
            if w > 0.0 {
                let col = eig.eigenvectors.column(k);
                let v = DVector::from_fn(n, |i, _| C64::new(col[i], col[n + i]));
                out += (&v * v.adjoint()).scale(0.5 * w);
            }
        }
        out
    };
    (build(1.0), build(-1.0))
}

impl StateVector {
    /// Builds a Sequence-mode vector; every coordinate must be finite.
    pub fn sequence(coords: impl Into<Vec<f64>>) -> Result<Self> {
        let coords = coords.into();
        if let Some(k) = coords.iter().position(|x| !x.is_finite()) {
            return Err(KatoError::Validation(format!("coordinate {k} is not finite")));
        }
        Ok(Self::from_dvector(DVector::from_vec(coords)))
    }

    /// Builds a Matrix-mode vector. The input must be Hermitian within
    /// [`HERMITIAN_TOL`] (relative to its largest entry); it is then
    /// symmetrised exactly.
    pub fn matrix(m: DMatrix<C64>) -> Result<Self> {
        check_hermitian(&m)?;
        Ok(Self::from_matrix_unchecked(&m))
    }

    /// Real diagonal density-style matrix `diag(p)`.
    pub fn diagonal(p: &[f64]) -> Result<Self> {
        let n = p.len();
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { C64::new(p[i], 0.0) } else { C64::new(0.0, 0.0) });
        Self::matrix(m)
    }

    /// Rank-one projector `|u⟩⟨u|`.
    pub fn outer(u: &DVector<C64>) -> Self {
        Self::from_matrix_unchecked(&(u * u.adjoint()))
    }

    pub(crate) fn from_dvector(v: DVector<f64>) -> Self {
        Self {
            repr: Repr::Sequence(v),
        }
    }

    pub(crate) fn from_matrix_unchecked(m: &DMatrix<C64>) -> Self {
        Self {
            repr: Repr::Matrix(symmetrize(m)),
        }
    }

    pub fn zeros(mode: Mode, dim: usize) -> Self {
        match mode {
            Mode::Sequence => Self::from_dvector(DVector::zeros(dim)),
            Mode::Matrix => Self {
                repr: Repr::Matrix(DMatrix::zeros(dim, dim)),
            },
        }
    }

    /// Unit basis vector `e_k` (Sequence) or projector `|k⟩⟨k|` (Matrix).
    pub fn basis(mode: Mode, dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dimension {dim}");
        let mut out = Self::zeros(mode, dim);
        match &mut out.repr {
            Repr::Sequence(v) => v[k] = 1.0,
            Repr::Matrix(m) => m[(k, k)] = C64::new(1.0, 0.0),
        }
        out
    }

    pub fn mode(&self) -> Mode {
        match self.repr {
            Repr::Sequence(_) => Mode::Sequence,
            Repr::Matrix(_) => Mode::Matrix,
        }
    }

    /// Truncation size `N` (vector length or matrix order).
    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::Sequence(v) => v.len(),
            Repr::Matrix(m) => m.nrows(),
        }
    }

    pub fn as_sequence(&self) -> Option<&DVector<f64>> {
        match &self.repr {
            Repr::Sequence(v) => Some(v),
            Repr::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<C64>> {
        match &self.repr {
            Repr::Matrix(m) => Some(m),
            Repr::Sequence(_) => None,
        }
    }

    pub(crate) fn seq(&self) -> &DVector<f64> {
        self.as_sequence().expect("sequence-mode vector")
    }

    pub(crate) fn mat(&self) -> &DMatrix<C64> {
        self.as_matrix().expect("matrix-mode vector")
    }

    /// `⟨Ψ, v⟩`: coordinate sum or trace.
    pub fn psi_norm(&self) -> f64 {
        match &self.repr {
            Repr::Sequence(v) => v.sum(),
            Repr::Matrix(m) => m.diagonal().iter().map(|z| z.re).sum(),
        }
    }

    /// State-space norm: `ℓ¹` norm or trace norm.
    pub fn norm(&self) -> f64 {
        match &self.repr {
            Repr::Sequence(v) => v.iter().map(|x| x.abs()).sum(),
            Repr::Matrix(m) => hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum(),
        }
    }

    /// Smallest coordinate or smallest eigenvalue; `0` for empty vectors.
    pub fn min_value(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        match &self.repr {
            Repr::Sequence(v) => v.min(),
            Repr::Matrix(m) => hermitian_eigenvalues(m)[0],
        }
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        match &self.repr {
            Repr::Sequence(v) => v.iter().all(|&x| x >= -tol),
            Repr::Matrix(m) => {
                if is_diagonal(m) {
                    return m.diagonal().iter().all(|z| z.re >= -tol);
                }
                cholesky_accepts(m, tol.max(f64::MIN_POSITIVE)) || self.min_value() >= -tol
            }
        }
    }

    /// Split `v = v₊ − v₋` with both parts in the positive cone
    /// (coordinatewise, or via an exact eigendecomposition).
    pub fn split_positive(&self) -> (StateVector, StateVector) {
        match &self.repr {
            Repr::Sequence(v) => (
                Self::from_dvector(v.map(|x| x.max(0.0))),
                Self::from_dvector(v.map(|x| (-x).max(0.0))),
            ),
            Repr::Matrix(m) => {
                if m.nrows() == 0 {
                    return (self.clone(), self.clone());
                }
                let (p, q) = hermitian_split(m);
                (Self::from_matrix_unchecked(&p), Self::from_matrix_unchecked(&q))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.repr {
            Repr::Sequence(v) => v.iter().all(|&x| x == 0.0),
            Repr::Matrix(m) => m.iter().all(|z| z.re == 0.0 && z.im == 0.0),
        }
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.assert_compatible(other);
        match (&self.repr, &other.repr) {
            (Repr::Sequence(a), Repr::Sequence(b)) => a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs())),
            (Repr::Matrix(a), Repr::Matrix(b)) => a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm())),
            _ => unreachable!(),
        }
    }

    /// `self ≤ other + tol` in the cone order (coordinatewise or Loewner).
    pub fn dominated_by(&self, other: &StateVector, tol: f64) -> bool {
        (other - self).is_positive(tol)
    }

    pub fn scaled(&self, alpha: f64) -> StateVector {
        match &self.repr {
            Repr::Sequence(v) => Self::from_dvector(v * alpha),
            Repr::Matrix(m) => Self {
                repr: Repr::Matrix(m * C64::new(alpha, 0.0)),
            },
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &StateVector) {
        self.assert_compatible(other);
        match (&mut self.repr, &other.repr) {
            (Repr::Sequence(a), Repr::Sequence(b)) => a.axpy(alpha, b, 1.0),
            (Repr::Matrix(a), Repr::Matrix(b)) => *a += b * C64::new(alpha, 0.0),
            _ => unreachable!(),
        }
    }

    pub(crate) fn assert_compatible(&self, other: &StateVector) {
        assert_eq!(self.mode(), other.mode(), "state vector mode mismatch");
        assert_eq!(self.dim(), other.dim(), "state vector dimension mismatch");
    }

    pub(crate) fn check_compatible(&self, mode: Mode, dim: usize) -> Result<()> {
        if self.mode() != mode {
            return Err(KatoError::ModeMismatch {
                expected: mode.name(),
                actual: self.mode().name(),
            });
        }
        if self.dim() != dim {
            return Err(KatoError::DimensionMismatch {
                expected: dim,
                actual: self.dim(),
            });
        }
        Ok(())
    }

    /// Coordinates (Sequence) or the real diagonal (Matrix).
    pub fn populations(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Sequence(v) => v.iter().copied().collect(),
            Repr::Matrix(m) => m.diagonal().iter().map(|z| z.re).collect(),
        }
    }
}

impl Add for &StateVector {
    type Output = StateVector;

    fn add(self, rhs: &StateVector) -> StateVector {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out
    }
}

impl Sub for &StateVector {
    type Output = StateVector;

    fn sub(self, rhs: &StateVector) -> StateVector {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &StateVector {
    type Output = StateVector;

    fn mul(self, rhs: f64) -> StateVector {
        self.scaled(rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DualRepr {
    Sequence(DVector<f64>),
    Matrix(DMatrix<C64>),
}

/// Bounded functional on a truncated state space: `ℓ∞` coordinates or a
/// bounded Hermitian matrix acting through `Tr(v·f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    repr: DualRepr,
}

impl DualVector {
    /// The unit functional `Ψ` (all-ones coordinates, or the identity).
    pub fn unit(mode: Mode, dim: usize) -> Self {
        match mode {
            Mode::Sequence => Self::from_dvector(DVector::from_element(dim, 1.0)),
            Mode::Matrix => Self::from_matrix_unchecked(&DMatrix::identity(dim, dim)),
        }
    }

    pub fn zeros(mode: Mode, dim: usize) -> Self {
        match mode {
            Mode::Sequence => Self::from_dvector(DVector::zeros(dim)),
            Mode::Matrix => Self::from_matrix_unchecked(&DMatrix::zeros(dim, dim)),
        }
    }

    /// Sequence-mode functional evaluated from a coordinate rule on `0..dim`.
    pub fn from_fn(dim: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::sequence((0..dim).map(f).collect::<Vec<_>>())
    }

    pub fn sequence(coords: impl Into<Vec<f64>>) -> Result<Self> {
        let coords = coords.into();
        if let Some(k) = coords.iter().position(|x| !x.is_finite()) {
            return Err(KatoError::Validation(format!("dual coordinate {k} is not finite")));
        }
        Ok(Self::from_dvector(DVector::from_vec(coords)))
    }

    pub fn matrix(m: DMatrix<C64>) -> Result<Self> {
        check_hermitian(&m)?;
        Ok(Self::from_matrix_unchecked(&m))
    }

    pub(crate) fn from_dvector(v: DVector<f64>) -> Self {
        Self {
            repr: DualRepr::Sequence(v),
        }
    }

    pub(crate) fn from_matrix_unchecked(m: &DMatrix<C64>) -> Self {
        Self {
            repr: DualRepr::Matrix(symmetrize(m)),
        }
    }

    pub fn mode(&self) -> Mode {
        match self.repr {
            DualRepr::Sequence(_) => Mode::Sequence,
            DualRepr::Matrix(_) => Mode::Matrix,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            DualRepr::Sequence(v) => v.len(),
            DualRepr::Matrix(m) => m.nrows(),
        }
    }

    pub fn as_sequence(&self) -> Option<&DVector<f64>> {
        match &self.repr {
            DualRepr::Sequence(v) => Some(v),
            DualRepr::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<C64>> {
        match &self.repr {
            DualRepr::Matrix(m) => Some(m),
            DualRepr::Sequence(_) => None,
        }
    }

    pub(crate) fn seq(&self) -> &DVector<f64> {
        self.as_sequence().expect("sequence-mode dual")
    }

    pub(crate) fn mat(&self) -> &DMatrix<C64> {
        self.as_matrix().expect("matrix-mode dual")
    }

    /// Coordinate `k` (Sequence) or diagonal entry `⟨k|f|k⟩` (Matrix).
    pub fn eval(&self, k: usize) -> f64 {
        match &self.repr {
            DualRepr::Sequence(v) => v[k],
            DualRepr::Matrix(m) => m[(k, k)].re,
        }
    }

    /// Sup norm (Sequence) or operator norm (Matrix).
    pub fn bound(&self) -> f64 {
        match &self.repr {
            DualRepr::Sequence(v) => v.iter().fold(0.0, |acc, x| acc.max(x.abs())),
            DualRepr::Matrix(m) => hermitian_eigenvalues(m).iter().fold(0.0, |acc, x| acc.max(x.abs())),
        }
    }

    pub fn max_abs_diff(&self, other: &DualVector) -> f64 {
        match (&self.repr, &other.repr) {
            (DualRepr::Sequence(a), DualRepr::Sequence(b)) => a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs())),
            (DualRepr::Matrix(a), DualRepr::Matrix(b)) => a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm())),
            _ => panic!("dual vector mode mismatch"),
        }
    }

    pub fn scaled(&self, alpha: f64) -> DualVector {
        match &self.repr {
            DualRepr::Sequence(v) => Self::from_dvector(v * alpha),
            DualRepr::Matrix(m) => Self {
                repr: DualRepr::Matrix(m * C64::new(alpha, 0.0)),
            },
        }
    }
}

/// `⟨Ψ, v⟩` for any `v`; equals the norm on the positive cone.
pub fn psi_norm(v: &StateVector) -> f64 {
    v.psi_norm()
}

pub fn is_positive(v: &StateVector, tol: f64) -> bool {
    v.is_positive(tol)
}

/// `⟨f, v⟩ = Σ f(k)·v(k)` or `Tr(v·f)`.
pub fn pair(f: &DualVector, v: &StateVector) -> Result<f64> {
    v.check_compatible(f.mode(), f.dim())?;
    Ok(match (&f.repr, &v.repr) {
        (DualRepr::Sequence(f), Repr::Sequence(v)) => f.dot(v),
        (DualRepr::Matrix(f), Repr::Matrix(v)) => trace_product(v, f).re,
        _ => unreachable!(),
    })
}

/// `Tr(a·b)` without forming the product.
pub(crate) fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
