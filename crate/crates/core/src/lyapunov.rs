//! Dense solver for the shifted Lyapunov equations behind the Lindblad
//! resolvent:
//!
//! ```text
//! forward:  λX − YX − XY* = V      (R(λ,A))
//! adjoint:  λZ − Y*Z − ZY = W      (P_λ = R(λ,A)*)
//! ```
//!
//! With `M = λ/2 − Y` these read `MX + XM* = V` and `M*Z + ZM = W`. A
//! complex Schur form `M = Q T Q*` reduces both to triangular sweeps
//! (Bartels–Stewart), `O(N³)` per solve after a one-off factorisation.

use nalgebra::{DMatrix, Schur, SymmetricEigen};

use crate::error::{KatoError, Result};
use crate::state_space::C64;

const SEPARATION_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
enum Factor {
    /// `Y` is diagonal: `d_i = λ/2 − y_ii`.
    Diagonal(Vec<C64>),
    /// `Y` real symmetric: `M = Q diag(d) Qᵀ` with real orthogonal `Q`.
    Orthogonal { q: DMatrix<C64>, d: Vec<C64> },
    Schur { q: DMatrix<C64>, t: DMatrix<C64> },
}

#[derive(Debug, Clone)]
pub(crate) struct LyapunovSolver {
    factor: Factor,
    separation: f64,
}

fn is_diagonal(y: &DMatrix<C64>) -> bool {
    let n = y.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || (y[(i, j)].re == 0.0 && y[(i, j)].im == 0.0)))
}

fn is_real_symmetric(y: &DMatrix<C64>) -> bool {
    let n = y.nrows();
    (0..n).all(|j| (0..n).all(|i| y[(i, j)].im == 0.0 && y[(i, j)].re == y[(j, i)].re))
}

fn min_pair_sum(d: &[C64]) -> f64 {
    let mut sep = f64::INFINITY;
    for a in d {
        for b in d {
            sep = sep.min((a + b.conj()).norm());
        }
    }
    sep
}

impl LyapunovSolver {
    pub(crate) fn new(y: &DMatrix<C64>, lambda: f64) -> Result<Self> {
        let n = y.nrows();
        let half = C64::new(0.5 * lambda, 0.0);
        let scale = y.iter().fold(lambda, |acc, z| acc.max(z.norm()));
        let (factor, separation) = if is_diagonal(y) {
            let d: Vec<C64> = (0..n).map(|i| half - y[(i, i)]).collect();
            let sep = min_pair_sum(&d);
            (Factor::Diagonal(d), sep)
        } else if is_real_symmetric(y) {
            let re = DMatrix::from_fn(n, n, |i, j| y[(i, j)].re);
            let eig = SymmetricEigen::new(re);
            let d: Vec<C64> = eig.eigenvalues.iter().map(|&v| half - C64::new(v, 0.0)).collect();
            let q = eig.eigenvectors.map(|v| C64::new(v, 0.0));
            let sep = min_pair_sum(&d);
            (Factor::Orthogonal { q, d }, sep)
        } else {
            let mut m = -y.clone();
            for i in 0..n {
                m[(i, i)] += half;
            }
            // QR iterations occasionally stall at machine precision on large
            // stiff grids; a slightly looser deflation threshold recovers.
            let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
                .or_else(|| Schur::try_new(m, 64.0 * f64::EPSILON, 100_000))
                .ok_or_else(|| KatoError::Validation("Schur decomposition did not converge".into()))?;
            let (q, t) = schur.unpack();
            let d: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
            let sep = min_pair_sum(&d);
            (Factor::Schur { q, t }, sep)
        };
        if n > 0 && separation < SEPARATION_FLOOR * scale {
            return Err(KatoError::IllConditioned { separation });
        }
        Ok(Self { factor, separation })
    }

    /// Smallest `|μ_i + conj(μ_j)|` over eigenvalues of `M`; a lower bound
    /// proxy for the conditioning of the solve.
    pub(crate) fn separation(&self) -> f64 {
        self.separation
    }

    /// Solves `MX + XM* = V`.
    pub(crate) fn solve(&self, v: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.factor {
            Factor::Diagonal(d) => DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] / (d[i] + d[j].conj())),
            Factor::Orthogonal { q, d } => {
                let vt = q.adjoint() * v * q;
                let x = DMatrix::from_fn(vt.nrows(), vt.ncols(), |i, j| vt[(i, j)] / (d[i] + d[j].conj()));
                q * x * q.adjoint()
            }
            Factor::Schur { q, t } => {
                let n = t.nrows();
                let vt = q.adjoint() * v * q;
                let mut x = DMatrix::<C64>::zeros(n, n);
                for j in (0..n).rev() {
                    let shift = t[(j, j)].conj();
                    let mut rhs: Vec<C64> = (0..n).map(|i| vt[(i, j)]).collect();
                    for k in (j + 1)..n {
                        let coef = t[(j, k)].conj();
                        if coef.re != 0.0 || coef.im != 0.0 {
                            for i in 0..n {
                                rhs[i] -= coef * x[(i, k)];
                            }
                        }
                    }
                    // (T + shift) x_j = rhs, upper triangular
                    for i in (0..n).rev() {
                        let mut acc = rhs[i];
                        for l in (i + 1)..n {
                            acc -= t[(i, l)] * x[(l, j)];
                        }
                        x[(i, j)] = acc / (t[(i, i)] + shift);
                    }
                }
                q * x * q.adjoint()
            }
        }
    }

    /// Solves `M*Z + ZM = W`.
    pub(crate) fn solve_adjoint(&self, w: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.factor {
            Factor::Diagonal(d) => DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] / (d[i].conj() + d[j])),
            Factor::Orthogonal { q, d } => {
                let wt = q.adjoint() * w * q;
                let z = DMatrix::from_fn(wt.nrows(), wt.ncols(), |i, j| wt[(i, j)] / (d[i].conj() + d[j]));
                q * z * q.adjoint()
            }
            Factor::Schur { q, t } => {
                let n = t.nrows();
                let wt = q.adjoint() * w * q;
                let mut z = DMatrix::<C64>::zeros(n, n);
                for j in 0..n {
                    let shift = t[(j, j)];
                    let mut rhs: Vec<C64> = (0..n).map(|i| wt[(i, j)]).collect();
                    for k in 0..j {
                        let coef = t[(k, j)];
                        if coef.re != 0.0 || coef.im != 0.0 {
                            for i in 0..n {
                                rhs[i] -= coef * z[(i, k)];
                            }
                        }
                    }
                    // (T* + shift) z_j = rhs, lower triangular
                    for i in 0..n {
                        let mut acc = rhs[i];
                        for l in 0..i {
                            acc -= t[(l, i)].conj() * z[(l, j)];
                        }
                        z[(i, j)] = acc / (t[(i, i)].conj() + shift);
                    }
                }
                q * z * q.adjoint()
            }
        }
    }
}
