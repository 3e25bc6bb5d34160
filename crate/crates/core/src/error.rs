use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TriformerError {
    /// Incompatible tensor shapes or parameter layouts.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid architecture or training configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or unusable input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TriformerError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TriformerError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = TriformerError> = std::result::Result<T, E>;
