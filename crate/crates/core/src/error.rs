use thiserror::Error;

use crate::result::StatusCode;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised while validating a problem or running a solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),

    #[error("callback failure: {0}")]
    CallbackFailure(String),

    /// The objective-evaluation budget is spent. Solvers translate this into
    /// [`StatusCode::MaxevalReached`] instead of surfacing it.
    #[error("evaluation budget exhausted")]
    BudgetExhausted,

    #[error("line search failed after {0} backtracking steps")]
    LineSearchFailure(usize),

    #[error("degenerate simplex: interpolation system is singular")]
    DegenerateSimplex,
}

impl Error {
    /// Status code reported when this error ends a solve.
    pub fn status(&self) -> StatusCode {
        match self {
            Error::InvalidArgs(_) => StatusCode::InvalidArgs,
            Error::BudgetExhausted => StatusCode::MaxevalReached,
            Error::CallbackFailure(_) | Error::LineSearchFailure(_) | Error::DegenerateSimplex => {
                StatusCode::CallbackFailure
            }
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgs(msg.into())
    }

    pub(crate) fn callback(msg: impl Into<String>) -> Self {
        Error::CallbackFailure(msg.into())
    }

    /// Prefixes the message with the name of the enclosing operation.
    pub fn context(self, what: &str) -> Self {
        match self {
            Error::InvalidArgs(m) => Error::InvalidArgs(format!("{what}: {m}")),
            Error::CallbackFailure(m) => Error::CallbackFailure(format!("{what}: {m}")),
            Error::LineSearchFailure(k) => {
                Error::CallbackFailure(format!("{what}: line search failed after {k} steps"))
            }
            other => other,
        }
    }
}
