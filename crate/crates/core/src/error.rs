//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GidxError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GidxError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Inputs violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Operation called on an object in the wrong state (e.g. untrained quantizer).
    #[error("state error: {0}")]
    State(String),

    /// Binary artifact is malformed.
    #[error("format error: {0}")]
    Format(String),
}

impl GidxError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GidxError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        GidxError::Validation(msg.into())
    }

    /// True for errors caused by bad user input rather than the environment.
    pub fn is_usage(&self) -> bool {
        matches!(self, GidxError::Validation(_) | GidxError::State(_))
    }
}
