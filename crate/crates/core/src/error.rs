use thiserror::Error;

use crate::radial::ConvergenceFailure;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A spectrum fell outside the cone an operation requires.
    #[error("outside the admissible cone: {0}")]
    Domain(String),

    #[error("ill-conditioned metric: {0}")]
    Conditioning(String),

    /// Hypotheses of a conditional statement do not hold; distinct from the statement being false.
    #[error("precondition not satisfied: {0}")]
    Precondition(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("scheme failure: {0}")]
    Scheme(String),

    #[error("{0}")]
    Convergence(Box<ConvergenceFailure>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the command line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
