//! Linear programs (tableau simplex) and semidefinite programs (primal-dual
//! interior point).

pub mod lp;
pub mod sdp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lp::{solve_lp, Arithmetic, LpProblem, LpRow, LpSolution, RowKind};
pub use sdp::{solve_sdp, solve_sdp_with, BlockMatrix, SdpOptions, SolveResult};

/// Outcome of a solve. For SDPs the labels refer to the problem
/// `min cᵀx s.t. Σ x_i F_i − F_0 ⪰ 0`: `Infeasible` means no `x` satisfies
/// the matrix inequality, `Unbounded` means `cᵀx` is unbounded below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::MaxIter => "maxiter",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("pivot limit {0} reached")]
    IterationLimit(usize),
    /// The iterates stopped making progress; the last iterate is attached.
    #[error("no interior progress after {iterations} iterations")]
    NoInterior { iterations: usize, last: Box<SolveResult> },
    #[error("numerical failure: {0}")]
    Numerical(String),
}
