//! Functional-integration engine for the self-energy renormalized spin-boson
//! model.
//!
//! The crate samples ±1 jump paths, evaluates the path functionals that enter
//! the Feynman–Kac representation in closed form, estimates semigroup matrix
//! elements by Monte Carlo, and cross-checks everything against exact
//! diagonalization on a truncated Fock space.

pub mod checks;
pub mod error;
pub mod fkf;
pub mod fock;
pub mod functionals;
pub mod grid;
pub mod path;
pub mod quad;

pub use error::{Error, Result};
