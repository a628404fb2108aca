use thiserror::Error;

/// Errors produced by grid construction, scheme assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("index {index} outside the admissible range {lo}..={hi}")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("singular or ill-conditioned system ({0})")]
    Singular(String),

    #[error("policy iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    HowardNotConverged { iterations: usize, residual: f64 },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty node set after exclusion")]
    EmptySelection,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
