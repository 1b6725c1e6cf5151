use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemlabError {
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid prior specification: {0}")]
    InvalidPrior(String),

    #[error("design matrix is rank deficient (smallest/largest singular value = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("mixture has {count} components, more than the supported {cap}")]
    TooManyComponents { count: u128, cap: u128 },

    #[error("component covariance is numerically singular (condition number bound {condition:e})")]
    SingularCovariance { condition: f64 },

    #[error(
        "pushforward covariance is numerically singular (smallest/largest eigenvalue = {ratio:e})"
    )]
    SingularPushforward { ratio: f64 },

    #[error("operation not supported for prior `{0}`")]
    UnsupportedPrior(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("fixed-point starts disagree: {first} vs {second}")]
    BranchAmbiguity { first: f64, second: f64 },

    #[error("no spectral edge found in the scanned range")]
    NoEdgeFound,
}

pub type Result<T> = std::result::Result<T, MemlabError>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::MemlabError::Precondition(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
