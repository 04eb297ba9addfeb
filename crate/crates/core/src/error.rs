use thiserror::Error;

use crate::index::Monomial;
use crate::sdp::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} needs {count} entries, above the cap of {cap}")]
    SizeLimit {
        what: &'static str,
        count: u128,
        cap: usize,
    },

    #[error("missing moments for {} monomial(s): {}", .0.len(), render_list(.0))]
    MissingMoments(Vec<Monomial>),

    #[error("invalid degree: {0}")]
    Degree(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("cannot parse {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("linear system breakdown at iteration {iteration}: {detail}")]
    SingularSystem { iteration: usize, detail: String },

    #[error("solver stopped with status {status:?} after {iterations} iterations (gap {gap:.3e})")]
    NotConverged {
        status: SolveStatus,
        iterations: usize,
        gap: f64,
    },

    #[error("inconsistent equality constraints")]
    InconsistentEqualities,

    #[error("reference sampling acceptance rate {rate:.3e} is below 1e-4")]
    LowAcceptance { rate: f64 },

    #[error("periodic Sobolev kernel needs m > n/2 (got n = {n}, m = {m}); H^m is not a reproducing kernel space otherwise")]
    KernelPrecondition { n: usize, m: u32 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn render_list(list: &[Monomial]) -> String {
    let shown: Vec<String> = list.iter().take(8).map(|m| m.to_string()).collect();
    let mut s = shown.join(", ");
    if list.len() > 8 {
        s.push_str(", ...");
    }
    s
}
