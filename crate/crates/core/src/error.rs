use thiserror::Error;

/// Errors produced by the inspection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigensolver did not converge after {iterations} iterations (worst relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Cholesky factorization failed (jitter tried up to {jitter:.3e})")]
    Factorization { jitter: f64 },

    #[error("scenario generation exhausted {attempts} retries")]
    RetryBudget { attempts: usize },

    #[error("no runs found in {0}")]
    NoRuns(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    ConfigSerialize(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
