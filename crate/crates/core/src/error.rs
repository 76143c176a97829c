use thiserror::Error;

/// Errors raised by the pricing, solving and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GapRiskError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inversion did not reach tolerance {tolerance:e} within {max_terms} terms (achieved bound {achieved:e})")]
    Convergence {
        tolerance: f64,
        achieved: f64,
        max_terms: usize,
    },

    #[error("no bracket: {0}")]
    NoBracket(String),

    #[error("negative hazard {hazard:e} bootstrapped at tenor {tenor}")]
    NegativeHazard { tenor: f64, hazard: f64 },

    #[error("target unattainable: {0}")]
    Unattainable(String),

    #[error("metric not monotone in haircut ({0}); increase the number of paths")]
    NonMonotone(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("data error at line {line}: {reason}")]
    Data { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, GapRiskError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> GapRiskError {
    GapRiskError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
