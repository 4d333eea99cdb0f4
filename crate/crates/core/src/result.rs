//! Termination status and the result record returned by every solver.

use std::fmt;

/// Termination outcome. The numeric codes are part of the report format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatusCode {
    Success,
    FtolReached,
    XtolReached,
    MaxevalReached,
    InvalidArgs,
    CallbackFailure,
}

impl StatusCode {
    pub const ALL: [StatusCode; 6] = [
        StatusCode::Success,
        StatusCode::FtolReached,
        StatusCode::XtolReached,
        StatusCode::MaxevalReached,
        StatusCode::InvalidArgs,
        StatusCode::CallbackFailure,
    ];

    pub fn code(self) -> i32 {
        match self {
            StatusCode::Success => 1,
            StatusCode::FtolReached => 3,
            StatusCode::XtolReached => 4,
            StatusCode::MaxevalReached => 5,
            StatusCode::InvalidArgs => -1,
            StatusCode::CallbackFailure => -2,
        }
    }

    pub fn from_code(code: i32) -> Option<StatusCode> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            StatusCode::Success => "SUCCESS",
            StatusCode::FtolReached => "FTOL_REACHED",
            StatusCode::XtolReached => "XTOL_REACHED",
            StatusCode::MaxevalReached => "MAXEVAL_REACHED",
            StatusCode::InvalidArgs => "INVALID_ARGS",
            StatusCode::CallbackFailure => "CALLBACK_FAILURE",
        }
    }

    pub fn message(self) -> &'static str {
        match self {
            StatusCode::Success => "Generic success return value.",
            StatusCode::FtolReached => {
                "Optimization stopped because ftol_rel or ftol_abs (above) was reached."
            }
            StatusCode::XtolReached => {
                "Optimization stopped because xtol_rel or xtol_abs (above) was reached."
            }
            StatusCode::MaxevalReached => {
                "Optimization stopped because maxeval (above) was reached."
            }
            StatusCode::InvalidArgs => "Invalid arguments (bounds, dimensions or options).",
            StatusCode::CallbackFailure => "A user callback or an internal step failed.",
        }
    }

    pub fn is_success(self) -> bool {
        self.code() > 0
    }
}

impl fmt::Display for StatusCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ( {}: {} )", self.code(), self.name(), self.message())
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: StatusCode,
    pub x_opt: Vec<f64>,
    pub f_opt: f64,
    /// Outer iterations of the algorithm (generations for ISRES).
    pub iterations: usize,
    /// Objective evaluations.
    pub evaluations: usize,
    /// Configured stopping conditions, e.g. `xtol_rel: 1e-08 maxeval: 1000`.
    pub termination: String,
    pub m_ineq: usize,
    pub m_eq: usize,
}
