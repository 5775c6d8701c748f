use thiserror::Error;

/// Errors produced by the simulator, the estimators and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: String, reason: String },

    #[error("no counts recorded for setting pair (x={x}, y={y})")]
    MissingSetting { x: usize, y: usize },

    #[error(
        "constrained fit did not converge after {iterations} iterations \
         (gradient norm {gradient_norm:.3e}, best log-likelihood {best_log_likelihood})"
    )]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        best_log_likelihood: f64,
        best: [f64; 8],
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn validation(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
