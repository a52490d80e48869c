use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its invariant.
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    /// An iterative solver stopped before reaching its tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// A query point lies outside the tabulated domain.
    #[error("position {position:?} is outside {what}")]
    OutOfBounds { what: &'static str, position: [f64; 3] },

    /// A statistic is not defined for the given data (for example, no jumps).
    #[error("statistic undefined: {0}")]
    Undefined(&'static str),

    /// A nonlinear fit failed; the residual trace records each accepted step.
    #[error("fit failed: {reason}")]
    FitFailed { reason: String, residual_trace: Vec<f64> },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput { field: field.into(), reason: reason.into() }
    }

    /// True for errors caused by bad user input (maps to CLI exit code 2).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidInput { .. } | Error::Format(_))
    }

    /// True for numerical failures (maps to CLI exit code 3).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotConverged { .. } | Error::FitFailed { .. } | Error::Undefined(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
