//! Pauli strings and Bloch (Pauli-basis) expansions of Hermitian operators.
//!
//! Qubit 0 is the leftmost tensor factor, i.e. the most significant bit of a
//! computational-basis index. A Pauli string acts as a signed permutation of
//! basis states, which keeps traces and expansions at O(2^k) per string
//! instead of materializing 2^k x 2^k matrices.

use crate::matrix::CMatrix;
use crate::scalar::{czero, Scalar, C};
use num_complex::Complex;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PauliError {
    #[error("invalid Pauli character {0:?} (expected one of I, X, Y, Z)")]
    InvalidChar(char),
    #[error("matrix dimension {dim} is not 2^k")]
    NotPowerOfTwo { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Pauli {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

impl Pauli {
    pub fn from_code(code: u8) -> Self {
        match code {
            0 => Pauli::I,
            1 => Pauli::X,
            2 => Pauli::Y,
            3 => Pauli::Z,
            _ => panic!("Pauli code out of range: {code}"),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Self, PauliError> {
        match c {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(PauliError::InvalidChar(other)),
        }
    }

    /// The 2x2 matrix of this Pauli operator.
    pub fn matrix<T: Scalar>(self) -> CMatrix<T> {
        let one = T::one();
        let mut m = CMatrix::zeros(2, 2);
        match self {
            Pauli::I => {
                m[(0, 0)] = Complex::new(one, T::zero());
                m[(1, 1)] = Complex::new(one, T::zero());
            }
            Pauli::X => {
                m[(0, 1)] = Complex::new(one, T::zero());
                m[(1, 0)] = Complex::new(one, T::zero());
            }
            Pauli::Y => {
                m[(0, 1)] = Complex::new(T::zero(), -one);
                m[(1, 0)] = Complex::new(T::zero(), one);
            }
            Pauli::Z => {
                m[(0, 0)] = Complex::new(one, T::zero());
                m[(1, 1)] = Complex::new(-one, T::zero());
            }
        }
        m
    }
}

/// A word of Pauli operators, one per qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    codes: Vec<Pauli>,
}

impl PauliString {
    pub fn new(codes: Vec<Pauli>) -> Self {
        Self { codes }
    }

    pub fn identity(n: usize) -> Self {
        Self { codes: vec![Pauli::I; n] }
    }

    /// Identity everywhere except the given `(qubit, operator)` pairs.
    pub fn from_support(n: usize, ops: &[(usize, Pauli)]) -> Self {
        let mut codes = vec![Pauli::I; n];
        for &(q, p) in ops {
            assert!(q < n, "qubit index {q} out of range for {n} qubits");
            codes[q] = p;
        }
        Self { codes }
    }

    /// Decodes a base-4 index (qubit 0 = most significant digit).
    pub fn from_index(index: usize, n: usize) -> Self {
        let mut codes = vec![Pauli::I; n];
        let mut rem = index;
        for q in (0..n).rev() {
            codes[q] = Pauli::from_code((rem % 4) as u8);
            rem /= 4;
        }
        assert_eq!(rem, 0, "index {index} out of range for {n} qubits");
        Self { codes }
    }

    /// Base-4 encoding, inverse of [`PauliString::from_index`].
    pub fn index(&self) -> usize {
        self.codes.iter().fold(0usize, |acc, p| acc * 4 + p.code() as usize)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[Pauli] {
        &self.codes
    }

    pub fn code(&self, qubit: usize) -> Pauli {
        self.codes[qubit]
    }

    pub fn is_identity(&self) -> bool {
        self.codes.iter().all(|&p| p == Pauli::I)
    }

    /// Qubits with a non-identity operator, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&q| self.codes[q] != Pauli::I).collect()
    }

    /// Number of non-identity positions.
    pub fn weight(&self) -> usize {
        self.codes.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Restriction to a subset of qubits (which need not be in the support).
    pub fn restrict(&self, qubits: &[usize]) -> PauliString {
        PauliString::new(qubits.iter().map(|&q| self.codes[q]).collect())
    }

    /// The string viewed on its support only, e.g. `IXZ` -> `XZ`.
    pub fn on_support(&self) -> PauliString {
        self.restrict(&self.support())
    }

    /// Bit mask (qubit 0 = most significant bit) of positions flipped by X/Y.
    pub(crate) fn flip_mask(&self) -> usize {
        let n = self.len();
        let mut mask = 0usize;
        for (q, &p) in self.codes.iter().enumerate() {
            if p == Pauli::X || p == Pauli::Y {
                mask |= 1 << (n - 1 - q);
            }
        }
        mask
    }

    /// Phase picked up on basis state `s`: `sigma |s> = phase(s) |s ^ flip>`.
    pub(crate) fn phase<T: Scalar>(&self, s: usize) -> C<T> {
        let n = self.len();
        let mut re = T::one();
        let mut im = T::zero();
        for (q, &p) in self.codes.iter().enumerate() {
            let bit = (s >> (n - 1 - q)) & 1;
            match p {
                Pauli::I | Pauli::X => {}
                Pauli::Z => {
                    if bit == 1 {
                        re = -re;
                        im = -im;
                    }
                }
                Pauli::Y => {
                    // |0> -> i|1>, |1> -> -i|0>
                    let (nre, nim) = if bit == 0 { (-im, re) } else { (im, -re) };
                    re = nre;
                    im = nim;
                }
            }
        }
        Complex::new(re, im)
    }

    /// Dense matrix of the string (dimension 2^n).
    pub fn matrix<T: Scalar>(&self) -> CMatrix<T> {
        let dim = 1usize << self.len();
        let flip = self.flip_mask();
        let mut m = CMatrix::zeros(dim, dim);
        for s in 0..dim {
            m[(s ^ flip, s)] = self.phase(s);
        }
        m
    }

    /// `Tr[m sigma]` without materializing the string.
    pub fn trace_with<T: Scalar>(&self, m: &CMatrix<T>) -> C<T> {
        let dim = 1usize << self.len();
        assert_eq!(m.rows(), dim, "trace_with: dimension mismatch");
        let flip = self.flip_mask();
        let mut acc = czero();
        for j in 0..dim {
            acc += m[(j, j ^ flip)] * self.phase::<T>(j);
        }
        acc
    }
}

impl FromStr for PauliString {
    type Err = PauliError;
    fn from_str(s: &str) -> Result<Self, PauliError> {
        s.chars().map(Pauli::from_char).collect::<Result<Vec<_>, _>>().map(PauliString::new)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.codes {
            write!(f, "{}", p.to_char())?;
        }
        Ok(())
    }
}

/// Full dense matrix for the Pauli word given as text, e.g. `"XY"`.
pub fn pauli_matrix<T: Scalar>(word: &str) -> Result<CMatrix<T>, PauliError> {
    Ok(word.parse::<PauliString>()?.matrix())
}

fn qubit_count_of_dim(dim: usize) -> Result<usize, PauliError> {
    if dim == 0 || dim & (dim - 1) != 0 {
        return Err(PauliError::NotPowerOfTwo { dim });
    }
    Ok(dim.trailing_zeros() as usize)
}

/// All 4^k Pauli coefficients `C_i = Tr[m sigma_i]` in base-4 index order.
///
/// For Hermitian input every coefficient is real; the imaginary parts are
/// discarded after a debug-time sanity check.
pub fn bloch_decompose<T: Scalar>(m: &CMatrix<T>) -> Result<Vec<T>, PauliError> {
    assert!(m.is_square(), "bloch_decompose: matrix must be square");
    let k = qubit_count_of_dim(m.rows())?;
    let count = 4usize.pow(k as u32);
    let mut coeffs = Vec::with_capacity(count);
    for idx in 0..count {
        let s = PauliString::from_index(idx, k);
        let tr = s.trace_with(m);
        debug_assert!(
            tr.im.abs() <= T::HERM_TOL * T::one().max(m.frobenius_norm()),
            "non-real Pauli coefficient {:?} at index {idx}",
            tr
        );
        coeffs.push(tr.re);
    }
    Ok(coeffs)
}

/// Rebuilds `2^-k * sum_i C_i sigma_i` from base-4 ordered coefficients.
pub fn bloch_reconstruct<T: Scalar>(coeffs: &[T], k: usize) -> CMatrix<T> {
    let count = 4usize.pow(k as u32);
    assert_eq!(coeffs.len(), count, "expected 4^{k} coefficients");
    let dim = 1usize << k;
    let norm = T::one() / T::from_f64_lossy(dim as f64);
    let mut m = CMatrix::zeros(dim, dim);
    for (idx, &c) in coeffs.iter().enumerate() {
        if c == T::zero() {
            continue;
        }
        let s = PauliString::from_index(idx, k);
        let flip = s.flip_mask();
        for b in 0..dim {
            let add = s.phase::<T>(b).scale(c * norm);
            m[(b ^ flip, b)] = m[(b ^ flip, b)] + add;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_qubit_matrices() {
        let x = pauli_matrix::<f64>("X").unwrap();
        assert_eq!(x[(0, 1)], Complex::new(1.0, 0.0));
        assert_eq!(x[(1, 0)], Complex::new(1.0, 0.0));
        assert_eq!(x[(0, 0)], Complex::new(0.0, 0.0));

        let y = pauli_matrix::<f64>("Y").unwrap();
        assert_eq!(y[(0, 1)], Complex::new(0.0, -1.0));
        assert_eq!(y[(1, 0)], Complex::new(0.0, 1.0));

        let z = pauli_matrix::<f64>("Z").unwrap();
        assert_eq!(z[(0, 0)], Complex::new(1.0, 0.0));
        assert_eq!(z[(1, 1)], Complex::new(-1.0, 0.0));
    }

    #[test]
    fn string_matrix_equals_explicit_kron() {
        // Independent construction: kron of single-qubit matrices, leftmost
        // factor most significant.
        for word in ["XY", "ZZ", "IY", "XZY", "YIX"] {
            let direct = pauli_matrix::<f64>(word).unwrap();
            let mut kron = CMatrix::<f64>::identity(1);
            for ch in word.chars() {
                kron = kron.kron(&Pauli::from_char(ch).unwrap().matrix());
            }
            assert!(
                (&direct - &kron).frobenius_norm() < 1e-14,
                "mismatch for {word}"
            );
        }
    }

    #[test]
    fn index_round_trip() {
        for idx in 0..64 {
            let s = PauliString::from_index(idx, 3);
            assert_eq!(s.index(), idx);
        }
        assert_eq!("XYZ".parse::<PauliString>().unwrap().index(), 1 * 16 + 2 * 4 + 3);
    }

    #[test]
    fn support_and_weight() {
        let s: PauliString = "IXIZ".parse().unwrap();
        assert_eq!(s.support(), vec![1, 3]);
        assert_eq!(s.weight(), 2);
        assert_eq!(s.on_support().to_string(), "XZ");
        assert!(PauliString::identity(3).is_identity());
    }

    #[test]
    fn bell_state_bloch_coefficients() {
        // rho = |Phi+><Phi+| built entrywise by hand.
        let h = 0.5;
        let mut rho = CMatrix::<f64>::zeros(4, 4);
        rho[(0, 0)] = Complex::new(h, 0.0);
        rho[(0, 3)] = Complex::new(h, 0.0);
        rho[(3, 0)] = Complex::new(h, 0.0);
        rho[(3, 3)] = Complex::new(h, 0.0);

        let coeffs = bloch_decompose(&rho).unwrap();
        let expect = |word: &str| coeffs[word.parse::<PauliString>().unwrap().index()];
        assert!((expect("II") - 1.0).abs() < 1e-12);
        assert!((expect("XX") - 1.0).abs() < 1e-12);
        assert!((expect("YY") + 1.0).abs() < 1e-12);
        assert!((expect("ZZ") - 1.0).abs() < 1e-12);
        for word in ["IX", "IY", "IZ", "XI", "YI", "ZI", "XY", "XZ", "YX", "YZ", "ZX", "ZY"] {
            assert!(expect(word).abs() < 1e-12, "coefficient {word} should vanish");
        }

        // Cross-check a few coefficients against a naive trace with kron-built
        // Pauli matrices.
        for word in ["XX", "YY", "ZZ", "XY"] {
            let mut sigma = CMatrix::<f64>::identity(1);
            for ch in word.chars() {
                sigma = sigma.kron(&Pauli::from_char(ch).unwrap().matrix());
            }
            let naive = (&rho * &sigma).trace();
            assert!((naive.re - expect(word)).abs() < 1e-12);
            assert!(naive.im.abs() < 1e-14);
        }
    }

    #[test]
    fn decompose_reconstruct_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for k in 1..=3usize {
            let dim = 1 << k;
            // Random density matrix G G^dagger / Tr.
            let mut g = CMatrix::<f64>::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    g[(i, j)] = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            let gg = &g * &g.adjoint();
            let rho = gg.scale(Complex::new(1.0 / gg.trace().re, 0.0));
            let coeffs = bloch_decompose(&rho).unwrap();
            let rebuilt = bloch_reconstruct(&coeffs, k);
            assert!(
                (&rebuilt - &rho).frobenius_norm() < 1e-12,
                "round trip failed at k={k}"
            );
        }
    }

    #[test]
    fn trace_with_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dim = 8;
        let mut m = CMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        for idx in [1usize, 5, 22, 38, 63] {
            let s = PauliString::from_index(idx, 3);
            let fast = s.trace_with(&m);
            let slow = (&m * &s.matrix()).trace();
            assert!((fast - slow).norm() < 1e-12, "index {idx}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!("XQ".parse::<PauliString>(), Err(PauliError::InvalidChar('Q'))));
        let m = CMatrix::<f64>::zeros(3, 3);
        assert!(matches!(bloch_decompose(&m), Err(PauliError::NotPowerOfTwo { dim: 3 })));
    }
}
