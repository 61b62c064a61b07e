//! Numerical laboratory for the mean-field limit of bosonic many-body
//! dynamics.
//!
//! The library evolves the exact N-body von Neumann equation on the
//! permutation-symmetric subspace, solves the nonlinear Hartree-von Neumann
//! equation, expands the interaction-picture dynamics in tree/loop Dyson
//! terms, realizes the density-matrix Poisson bracket calculus dual to those
//! terms, and evaluates every closed-form error bound tying the two dynamics
//! together. Everything is deterministic given a seed, and every nontrivial
//! construction is cross-checked against an independent brute-force oracle
//! in the test suites.

pub mod bounds;
pub mod config;
pub mod eig;
pub mod error;
pub mod fock;
pub mod hartree;
pub mod hierarchy;
pub mod matrix;
pub mod nbody;
pub mod poisson;
pub mod report;
pub mod rng;
pub mod sweep;
pub mod tensor;
pub mod verify;

pub use eig::{eig_hermitian, op_norm, propagate, HermitianSpectrum, SpectralPropagator};
pub use error::{CoreError, Result};
pub use fock::{OccupationBasis, SymmetricNBodyState};
pub use hartree::{DensityMatrix, InteractionModel};
pub use matrix::ComplexMatrix;
pub use poisson::PObservable;

pub use num_complex::Complex64;
