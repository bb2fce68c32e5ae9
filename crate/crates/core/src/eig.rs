//! Complex Hermitian eigendecomposition via cyclic Jacobi rotations.
//!
//! Dimensions in this crate are small (at most 256, i.e. eight qubits), where
//! Jacobi is simple, unconditionally stable, and accurate to machine
//! precision. Eigenvalues come back sorted ascending with the eigenvector
//! columns permuted to match.

use crate::matrix::CMatrix;
use crate::scalar::Scalar;
use num_complex::Complex;
use thiserror::Error;

/// Hard cap on the dimension accepted by [`hermitian_eig`].
pub const MAX_EIG_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (defect {defect:.3e} exceeds tolerance {tol:.3e})")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("matrix dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("Jacobi sweeps failed to converge (off-diagonal norm {off:.3e})")]
    NoConvergence { off: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Eigenvalues (ascending) and an orthonormal eigenbasis of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T: Scalar = f64> {
    pub values: Vec<T>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: CMatrix<T>,
}

impl<T: Scalar> EigenDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min_value(&self) -> T {
        self.values[0]
    }

    /// Rebuilds `V diag(values) V^dagger`.
    pub fn reconstruct(&self) -> CMatrix<T> {
        self.apply(|v| v)
    }

    /// Rebuilds with eigenvalues mapped through `f` (spectral calculus).
    pub fn apply(&self, f: impl Fn(T) -> T) -> CMatrix<T> {
        let d = self.dim();
        let v = &self.vectors;
        let mut out = CMatrix::zeros(d, d);
        for k in 0..d {
            let fv = f(self.values[k]);
            if fv == T::zero() {
                continue;
            }
            for i in 0..d {
                let vik = v[(i, k)].scale(fv);
                for j in 0..d {
                    let add = vik * v[(j, k)].conj();
                    out[(i, j)] = out[(i, j)] + add;
                }
            }
        }
        out
    }
}

fn off_diagonal_norm<T: Scalar>(a: &CMatrix<T>) -> T {
    let d = a.rows();
    let mut acc = T::zero();
    for p in 0..d {
        for q in (p + 1)..d {
            acc += a[(p, q)].norm_sqr() + a[(q, p)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi sweeps.
///
/// The input must be Hermitian within the scalar's tolerance; sweeps stop
/// once every off-diagonal entry is negligible relative to the Frobenius
/// norm. Typical matrices here converge in well under ten sweeps.
pub fn hermitian_eig<T: Scalar>(m: &CMatrix<T>) -> Result<EigenDecomposition<T>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    let d = m.rows();
    if d > MAX_EIG_DIM {
        return Err(LinalgError::DimensionTooLarge { dim: d, max: MAX_EIG_DIM });
    }
    let fnorm = m.frobenius_norm();
    let herm_tol = T::HERM_TOL * T::one().max(fnorm);
    let defect = m.hermitian_defect();
    if defect > herm_tol {
        return Err(LinalgError::NotHermitian { defect: defect.as_f64(), tol: herm_tol.as_f64() });
    }

    let mut a = m.hermitize();
    let mut v = CMatrix::<T>::identity(d);
    if d <= 1 || fnorm == T::zero() {
        let values = (0..d).map(|i| a[(i, i)].re).collect();
        return Ok(EigenDecomposition { values, vectors: v });
    }

    let stop = T::JACOBI_TOL * fnorm;
    // Entries already this small contribute nothing at working precision.
    let skip = stop / T::from_f64_lossy((d * d) as f64);
    let max_sweeps = 64;
    let mut converged = false;
    for _ in 0..max_sweeps {
        if off_diagonal_norm(&a) <= stop {
            converged = true;
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= skip {
                    continue;
                }
                // Phase so that the pivot becomes a real 2x2 problem, then
                // the classical stable tangent formula.
                let phase = apq.unscale(r); // e^{i phi}
                let alpha = a[(p, p)].re;
                let gamma = a[(q, q)].re;
                let tau = (gamma - alpha) / (r + r);
                let t = if tau == T::zero() {
                    T::one()
                } else {
                    let sgn = if tau > T::zero() { T::one() } else { -T::one() };
                    sgn / (tau.abs() + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;

                let cs = Complex::new(c, T::zero());
                let s_pos = phase.scale(s); // s * e^{i phi}
                let s_neg = phase.conj().scale(s); // s * e^{-i phi}

                // Row update: A <- J^dagger A (rows p and q change).
                for j in 0..d {
                    let ap = a[(p, j)];
                    let aq = a[(q, j)];
                    a[(p, j)] = cs * ap - s_pos * aq;
                    a[(q, j)] = s_neg * ap + cs * aq;
                }
                // Column update: A <- A J (columns p and q change).
                for i in 0..d {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    a[(i, p)] = cs * ap - s_neg * aq;
                    a[(i, q)] = s_pos * ap + cs * aq;
                }
                // Clean the pivot pair exactly; rounding noise here is what
                // the sweep is trying to eliminate.
                a[(p, q)] = Complex::new(T::zero(), T::zero());
                a[(q, p)] = Complex::new(T::zero(), T::zero());
                a[(p, p)] = Complex::new(a[(p, p)].re, T::zero());
                a[(q, q)] = Complex::new(a[(q, q)].re, T::zero());

                // Accumulate V <- V J.
                for i in 0..d {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = cs * vp - s_neg * vq;
                    v[(i, q)] = s_pos * vp + cs * vq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > stop {
        return Err(LinalgError::NoConvergence { off: off_diagonal_norm(&a).as_f64() });
    }

    let mut order: Vec<usize> = (0..d).collect();
    let diag: Vec<T> = (0..d).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("eigenvalue NaN"));
    let values: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = CMatrix::zeros(d, d);
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..d {
            vectors[(i, new_col)] = v[(i, old_col)];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Frobenius-nearest positive semidefinite matrix: eigenvalues clipped at zero.
pub fn project_psd<T: Scalar>(m: &CMatrix<T>) -> Result<CMatrix<T>, LinalgError> {
    let eig = hermitian_eig(m)?;
    if eig.values.first().map_or(true, |&v| v >= T::zero()) {
        return Ok(m.hermitize());
    }
    Ok(eig.apply(|v| v.max(T::zero())))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue<T: Scalar>(m: &CMatrix<T>) -> Result<T, LinalgError> {
    Ok(hermitian_eig(m)?.min_value())
}
