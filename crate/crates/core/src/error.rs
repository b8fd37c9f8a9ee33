use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the hashing library.
#[derive(Debug, Error)]
pub enum AthError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("label column {col} is not one-hot")]
    NotOneHot { col: usize },

    #[error("label matrix has {labels} columns but features have {features}")]
    LabelColumnMismatch { labels: usize, features: usize },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("linear solve failed: {0}")]
    Solver(String),
}

impl AthError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AthError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, AthError>;
