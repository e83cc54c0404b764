//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Gram matrix could not be factorized even after jitter escalation.
    #[error(
        "Gram factorization failed after jitter escalation up to {max_jitter:e}; \
         nearest input pair is ({i}, {j}) at distance {dist:e} — near-duplicate inputs \
         need a positive nugget"
    )]
    Factorization {
        max_jitter: f64,
        i: usize,
        j: usize,
        dist: f64,
    },

    /// Predictive covariance at the query point is singular even after jitter.
    #[error(
        "predictive covariance at the query point is singular after jitter; the point is \
         already exhausted by the training set — do not re-query it"
    )]
    ExhaustedPoint,

    /// An operation that needs posterior samples received an empty chain.
    #[error("empty chain: {0}")]
    EmptyChain(&'static str),

    /// The MCMC start point has zero posterior density.
    #[error("invalid MCMC start: log-density at the initial point is -inf")]
    InvalidStart,

    /// The chain rejected every proposal for too long.
    #[error(
        "stuck chain: {rejections} consecutive rejections (acceptance so far {acceptance:.4}, \
         current log-density {logp:.4e})"
    )]
    StuckChain {
        rejections: usize,
        acceptance: f64,
        logp: f64,
    },

    /// Every objective evaluation returned NaN.
    #[error("optimizer failure: every objective evaluation returned NaN")]
    AllNan,

    /// A matrix expected to be SPD failed its factorization.
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(&'static str),

    /// Misuse of the dense verification oracle.
    #[error("oracle misuse: {0}")]
    OracleMisuse(String),

    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// Generic numerical failure.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical/runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
