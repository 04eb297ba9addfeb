//! Command-line front end: problem files, result files and the commands
//! behind the `sobomos` binary.

pub mod commands;
pub mod problem;
pub mod report;

pub use commands::{run, Command, RunConfig};
pub use problem::ProblemFile;
pub use report::RunResult;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl From<sobomos_core::Error> for CliError {
    fn from(e: sobomos_core::Error) -> Self {
        use sobomos_core::Error as E;
        match e {
            E::NotConverged { .. }
            | E::SingularSystem { .. }
            | E::InconsistentEqualities
            | E::LowAcceptance { .. } => CliError::Solver(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}
