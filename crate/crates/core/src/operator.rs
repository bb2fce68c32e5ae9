//! Hermitian operators attached to a labelled set of qubits, with partial
//! trace and identity-padding embeddings between qubit sets.

use crate::matrix::CMatrix;
use crate::scalar::{Scalar, C};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("qubit list {0:?} must be strictly increasing")]
    UnsortedQubits(Vec<usize>),
    #[error("matrix dimension {dim} does not match 2^{qubits}")]
    DimensionMismatch { dim: usize, qubits: usize },
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("{child:?} is not a subset of {parent:?}")]
    NotASubset { child: Vec<usize>, parent: Vec<usize> },
}

/// For each local index over `positions` (MSB-first), the corresponding bit
/// pattern inside a `total`-bit register. Qubit 0 is the most significant bit.
pub fn scatter_table(total: usize, positions: &[usize]) -> Vec<usize> {
    let k = positions.len();
    let mut table = vec![0usize; 1 << k];
    for local in 0..(1usize << k) {
        let mut pattern = 0usize;
        for (j, &q) in positions.iter().enumerate() {
            let bit = (local >> (k - 1 - j)) & 1;
            pattern |= bit << (total - 1 - q);
        }
        table[local] = pattern;
    }
    table
}

/// Traces out the listed local positions of a `k`-qubit matrix.
pub fn partial_trace_positions<T: Scalar>(
    m: &CMatrix<T>,
    k: usize,
    traced: &[usize],
) -> CMatrix<T> {
    assert_eq!(m.rows(), 1 << k, "matrix dimension does not match qubit count");
    assert!(traced.iter().all(|&p| p < k), "traced position out of range");
    let kept: Vec<usize> = (0..k).filter(|p| !traced.contains(p)).collect();
    let keep_table = scatter_table(k, &kept);
    let trace_table = scatter_table(k, traced);
    let out_dim = 1usize << kept.len();
    let mut out = CMatrix::zeros(out_dim, out_dim);
    for a in 0..out_dim {
        for b in 0..out_dim {
            let mut acc: C<T> = num_complex::Complex::new(T::zero(), T::zero());
            for &t in &trace_table {
                acc += m[(keep_table[a] | t, keep_table[b] | t)];
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// Pads a matrix on `positions` (within a `total`-qubit register) with
/// identity on the remaining qubits.
pub fn embed_positions<T: Scalar>(m: &CMatrix<T>, positions: &[usize], total: usize) -> CMatrix<T> {
    let k = positions.len();
    assert_eq!(m.rows(), 1 << k, "matrix dimension does not match position count");
    assert!(positions.iter().all(|&p| p < total), "embed position out of range");
    let rest: Vec<usize> = (0..total).filter(|p| !positions.contains(p)).collect();
    let pos_table = scatter_table(total, positions);
    let rest_table = scatter_table(total, &rest);
    let mut out = CMatrix::zeros(1 << total, 1 << total);
    for r in 0..(1usize << k) {
        for c in 0..(1usize << k) {
            let v = m[(r, c)];
            if v == num_complex::Complex::new(T::zero(), T::zero()) {
                continue;
            }
            for &o in &rest_table {
                out[(pos_table[r] | o, pos_table[c] | o)] = v;
            }
        }
    }
    out
}

/// A Hermitian matrix living on an explicit, sorted set of global qubits.
#[derive(Debug, Clone)]
pub struct HermitianOperator<T: Scalar = f64> {
    qubits: Vec<usize>,
    mat: CMatrix<T>,
}

impl<T: Scalar> HermitianOperator<T> {
    pub fn new(qubits: Vec<usize>, mat: CMatrix<T>) -> Result<Self, OperatorError> {
        if qubits.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OperatorError::UnsortedQubits(qubits));
        }
        if mat.rows() != 1 << qubits.len() || !mat.is_square() {
            return Err(OperatorError::DimensionMismatch { dim: mat.rows(), qubits: qubits.len() });
        }
        let defect = mat.hermitian_defect();
        if defect > T::HERM_TOL * T::one().max(mat.frobenius_norm()) {
            return Err(OperatorError::NotHermitian(defect.as_f64()));
        }
        Ok(Self { qubits, mat })
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// Traces out the given global qubits, which must belong to this operator.
    pub fn partial_trace(&self, traced: &[usize]) -> Result<Self, OperatorError> {
        let local: Option<Vec<usize>> =
            traced.iter().map(|q| self.qubits.iter().position(|x| x == q)).collect();
        let local = local.ok_or_else(|| OperatorError::NotASubset {
            child: traced.to_vec(),
            parent: self.qubits.clone(),
        })?;
        let kept: Vec<usize> =
            self.qubits.iter().copied().filter(|q| !traced.contains(q)).collect();
        let out = partial_trace_positions(&self.mat, self.qubits.len(), &local);
        Ok(Self { qubits: kept, mat: out })
    }

    /// Identity-pads onto a superset of qubits (sorted), returning the matrix
    /// in that register's ordering.
    pub fn embed_into(&self, target: &[usize]) -> Result<CMatrix<T>, OperatorError> {
        let positions: Option<Vec<usize>> =
            self.qubits.iter().map(|q| target.iter().position(|x| x == q)).collect();
        let positions = positions.ok_or_else(|| OperatorError::NotASubset {
            child: self.qubits.clone(),
            parent: target.to_vec(),
        })?;
        Ok(embed_positions(&self.mat, &positions, target.len()))
    }

    /// `Tr[self other]`, e.g. an energy term against a density matrix on the
    /// same qubit set.
    pub fn expectation_with(&self, rho: &CMatrix<T>) -> T {
        assert_eq!(rho.rows(), self.dim(), "expectation_with: dimension mismatch");
        let val = self.mat.adjoint().inner(rho);
        debug_assert!(
            val.im.abs() <= T::HERM_TOL * T::one().max(rho.frobenius_norm() * self.mat.frobenius_norm()),
            "expectation has imaginary part {:?}",
            val
        );
        val.re
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::hermitian_eig;
    use crate::pauli::pauli_matrix;
    use num_complex::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bell_density() -> CMatrix<f64> {
        let mut rho = CMatrix::zeros(4, 4);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            rho[(i, j)] = Complex::new(0.5, 0.0);
        }
        rho
    }

    fn random_density(k: usize, seed: u64) -> CMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 1 << k;
        let mut g = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                g[(i, j)] = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let gg = &g * &g.adjoint();
        gg.scale(Complex::new(1.0 / gg.trace().re, 0.0))
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let rho = HermitianOperator::new(vec![0, 1], bell_density()).unwrap();
        for traced in [vec![0usize], vec![1usize]] {
            let red = rho.partial_trace(&traced).unwrap();
            let expected = CMatrix::identity(2).scale(Complex::new(0.5, 0.0));
            assert!((red.matrix() - &expected).frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn partial_trace_preserves_trace_and_psd() {
        for seed in 0..5u64 {
            let rho = random_density(3, seed);
            let op = HermitianOperator::new(vec![0, 1, 2], rho).unwrap();
            let red = op.partial_trace(&[1]).unwrap();
            assert_eq!(red.qubits(), &[0, 2]);
            assert!((red.matrix().trace().re - 1.0).abs() < 1e-12);
            let eig = hermitian_eig(red.matrix()).unwrap();
            assert!(eig.min_value() > -1e-12, "marginal lost positivity");
        }
    }

    #[test]
    fn partial_trace_composes() {
        let rho = random_density(3, 9);
        let op = HermitianOperator::new(vec![2, 5, 7], rho).unwrap();
        let two_step = op.partial_trace(&[5]).unwrap().partial_trace(&[2]).unwrap();
        let one_step = op.partial_trace(&[2, 5]).unwrap();
        assert_eq!(two_step.qubits(), &[7]);
        assert!((two_step.matrix() - one_step.matrix()).frobenius_norm() < 1e-13);
    }

    #[test]
    fn ptrace_rejects_non_member_qubit() {
        let op = HermitianOperator::new(vec![0, 1], bell_density()).unwrap();
        assert!(matches!(op.partial_trace(&[4]), Err(OperatorError::NotASubset { .. })));
    }

    #[test]
    fn embed_matches_explicit_kron() {
        // X on qubit 1 of three qubits is I (x) X (x) I.
        let x = pauli_matrix::<f64>("X").unwrap();
        let op = HermitianOperator::new(vec![1], x).unwrap();
        let embedded = op.embed_into(&[0, 1, 2]).unwrap();
        let expected = pauli_matrix::<f64>("IXI").unwrap();
        assert!((&embedded - &expected).frobenius_norm() < 1e-14);
    }

    #[test]
    fn embed_then_trace_returns_scaled_original() {
        let rho = random_density(2, 4);
        let op = HermitianOperator::new(vec![1, 3], rho.clone()).unwrap();
        let big = op.embed_into(&[0, 1, 2, 3]).unwrap();
        let big_op = HermitianOperator::new(vec![0, 1, 2, 3], big).unwrap();
        let back = big_op.partial_trace(&[0, 2]).unwrap();
        // Tracing identity padding multiplies by 2 per padded qubit.
        let expected = rho.scale(Complex::new(4.0, 0.0));
        assert!((back.matrix() - &expected).frobenius_norm() < 1e-12);
    }

    #[test]
    fn expectation_of_pauli_on_bell() {
        let xx = HermitianOperator::new(vec![0, 1], pauli_matrix("XX").unwrap()).unwrap();
        assert!((xx.expectation_with(&bell_density()) - 1.0).abs() < 1e-12);
        let yy = HermitianOperator::new(vec![0, 1], pauli_matrix("YY").unwrap()).unwrap();
        assert!((yy.expectation_with(&bell_density()) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constructor_validation() {
        assert!(matches!(
            HermitianOperator::new(vec![1, 0], CMatrix::<f64>::identity(4)),
            Err(OperatorError::UnsortedQubits(_))
        ));
        assert!(matches!(
            HermitianOperator::new(vec![0], CMatrix::<f64>::identity(4)),
            Err(OperatorError::DimensionMismatch { .. })
        ));
        let mut skew = CMatrix::<f64>::zeros(2, 2);
        skew[(0, 1)] = Complex::new(1.0, 0.0);
        assert!(matches!(
            HermitianOperator::new(vec![0], skew),
            Err(OperatorError::NotHermitian(_))
        ));
    }
}
