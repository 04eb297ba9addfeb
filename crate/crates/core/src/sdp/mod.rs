//! Dense block-diagonal semidefinite programs.

mod problem;
mod solver;

pub use problem::{Block, Equality, SdpProblem, Triplet};
pub use solver::{solve, SdpSolution, SolveStatus, SolverOptions};
