//! Invariant SDPs, their reductions and the SDPA exchange format.

pub mod invariant;
pub mod reduce;
pub mod sdpa;

use thiserror::Error;

pub use invariant::{build_theta_prime, from_sdpa, restrict_to_invariant, to_sdpa, InvariantSdp, OrbitRow};
pub use reduce::{reduce_block, reduce_direct, reduce_regular, BlockMode, Form, Recovery, ReducedProgram};
pub use sdpa::{read_sdpa, write_sdpa, SdpaBuilder, SdpaEntry, SdpaError, SdpaProblem};

use crate::star_algebra::AlgebraError;

#[derive(Debug, Error)]
pub enum SdpModelError {
    #[error("data not invariant under generator {generator}: {what} changes")]
    NotInvariant { generator: usize, what: String },
    #[error("generator {generator} maps edge {edge:?} to a non-edge")]
    ActionNotAutomorphism { generator: usize, edge: (usize, usize) },
    #[error("block map residual {residual:e} exceeds {tol:e}")]
    UnverifiedIsomorphism { residual: f64, tol: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("invalid program: {0}")]
    Invalid(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}
