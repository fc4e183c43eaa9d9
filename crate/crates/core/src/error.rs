use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solvers, diagnostics and experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid or transform configuration that cannot be honoured.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A config key that is missing, malformed or out of range.
    #[error("{key} {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The solver state no longer satisfies its invariants.
    #[error("state corruption: {0}")]
    StateCorruption(String),

    #[error("CFL violation: dt = {dt:e} exceeds the positivity limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("solver aborted at t = {t} (step {step}): {reason}")]
    SolverAbort { t: f64, step: u64, reason: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
