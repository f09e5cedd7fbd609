//! Inexact symmetric Gauss-Seidel based majorized semi-proximal ADMM for
//! multi-block convex composite conic programs, with a specialization to
//! convex quadratic and linear SDP duals.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the CLI and the test-suite use.

pub mod admm;
pub mod blockops;
pub mod error;
pub mod harness;
pub mod prox;
pub mod qsdp;
pub mod random;
pub mod scalar;
pub mod sgs;
pub mod subsolve;
pub mod svec;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BlockVector64 = blockops::BlockVector<f64>;
pub type BlockOperator64 = blockops::BlockOperator<f64>;
pub type SolverConfig64 = admm::SolverConfig<f64>;
pub type TwoBlockProblem64 = admm::TwoBlockProblem<f64>;
pub type QsdpProblem64 = qsdp::QsdpProblem<f64>;
pub type DualIterate64 = qsdp::DualIterate<f64>;
pub type SolveReport64 = admm::SolveReport<f64>;

pub type BlockVector32 = blockops::BlockVector<f32>;
pub type BlockOperator32 = blockops::BlockOperator<f32>;
pub type TwoBlockProblem32 = admm::TwoBlockProblem<f32>;
