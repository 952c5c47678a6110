use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        /// Last iterate, returned so callers may keep a partial result.
        partial: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
