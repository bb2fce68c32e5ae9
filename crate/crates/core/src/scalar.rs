//! Floating-point scalar abstraction for the dense linear-algebra layer.
//!
//! Everything numeric in the matrix/eigensolver/simulator stack is generic
//! over [`Scalar`] so the same code runs in `f32` and `f64`. The shipped
//! tooling (tomography, SDP solver, CLI) instantiates `f64`; the `f32`
//! instantiation exists for cheap smoke checks and keeps the kernels honest
//! about precision assumptions.

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar usable as the base field of the complex matrix kernels.
///
/// The associated constants are precision-scaled tolerances: `f64` gets the
/// tight values the rest of the crate is specified against, `f32` gets
/// loosened analogues.
pub trait Scalar: Float + FromPrimitive + NumAssign + std::fmt::Debug + std::fmt::Display + 'static {
    /// Tolerance for "is this matrix Hermitian" checks.
    const HERM_TOL: Self;
    /// Relative off-diagonal threshold at which Jacobi sweeps stop.
    const JACOBI_TOL: Self;
    /// Tolerance for unit-norm / unit-trace checks.
    const UNIT_TOL: Self;

    /// Lossy conversion from `f64` literals (panics only on NaN-free inputs
    /// that a float type genuinely cannot represent, which does not happen
    /// for f32/f64).
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable in scalar type")
    }

    /// `self` as an `f64`, for reporting and for code paths that are pinned
    /// to double precision (statistics, solver tolerances).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Scalar for f64 {
    const HERM_TOL: Self = 1e-10;
    const JACOBI_TOL: Self = 1e-12;
    const UNIT_TOL: Self = 1e-10;
}

impl Scalar for f32 {
    const HERM_TOL: Self = 1e-4;
    const JACOBI_TOL: Self = 1e-6;
    const UNIT_TOL: Self = 1e-4;
}

/// Complex number over the crate's scalar abstraction.
pub type C<T> = Complex<T>;

/// Shorthand for the additive identity.
pub fn czero<T: Scalar>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

/// Shorthand for the multiplicative identity.
pub fn cone<T: Scalar>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

/// The imaginary unit.
pub fn ci<T: Scalar>() -> C<T> {
    Complex::new(T::zero(), T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_tolerances_are_tighter_than_f32() {
        assert!(f64::HERM_TOL < f32::HERM_TOL as f64);
        assert!(f64::JACOBI_TOL < f32::JACOBI_TOL as f64);
    }

    #[test]
    fn complex_helpers() {
        let i = ci::<f64>();
        assert_eq!(i * i, -cone::<f64>());
        assert_eq!(czero::<f32>() + cone::<f32>(), cone::<f32>());
    }
}
