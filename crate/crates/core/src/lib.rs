//! Reduced-density-matrix tomography with semidefinite refinement.
//!
//! The crate covers the full pipeline for estimating and certifying local
//! energies of few-body Hamiltonians from projective measurements:
//!
//! * dense complex Hermitian linear algebra sized for qubit blocks
//!   ([`matrix`], [`eig`]),
//! * Pauli-basis expansions and labelled operators ([`pauli`], [`operator`]),
//! * exact state-vector simulation and measurement sampling ([`sim`]),
//! * hypergraph Hamiltonians such as the open XY chain ([`hamiltonian`]),
//! * shot-based local tomography with bootstrap confidence intervals
//!   ([`tomography`]),
//! * a small-scale semidefinite solver ([`sdp`]) and the marginal-compatible
//!   energy bounds built on it ([`bounds`]),
//! * measurement-driven algorithmic cooling ([`cooling`]).
//!
//! The numeric kernels are generic over the floating-point [`scalar::Scalar`]
//! type; the aliases below pin the default double-precision surface that the
//! statistics, solver, and command-line layers use.

pub mod bounds;
pub mod cooling;
pub mod eig;
pub mod hamiltonian;
pub mod matrix;
pub mod operator;
pub mod pauli;
pub mod rng;
pub mod scalar;
pub mod sdp;
pub mod sim;
pub mod tomography;

pub use eig::{hermitian_eig, project_psd, EigenDecomposition};
pub use hamiltonian::{build_xy_chain, Hypergraph, LocalHamiltonian};
pub use matrix::CMatrix;
pub use operator::HermitianOperator;
pub use pauli::{bloch_decompose, bloch_reconstruct, pauli_matrix, Pauli, PauliString};
pub use scalar::Scalar;
pub use sim::{apply_pauli_rotation, ground_state, sample_shot, xy_exact_energy, ShotRecord, Statevector};

/// Double-precision complex matrix, the working type of the solver stack.
pub type Matrix = CMatrix<f64>;
/// Single-precision complex matrix.
pub type Matrix32 = CMatrix<f32>;
/// Double-precision labelled Hermitian operator.
pub type Operator = HermitianOperator<f64>;
/// Double-precision pure state.
pub type State = Statevector<f64>;
/// Double-precision eigendecomposition.
pub type Eigen = EigenDecomposition<f64>;
