use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied something that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A NaN or infinity surfaced during computation.
    #[error("numeric error at index {index}: {message}")]
    Numeric { index: usize, message: String },

    /// The model kind does not support the requested operation.
    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("csv error at row {row}, column {column:?}: {message}")]
    CsvCell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: msg.into(),
        }
    }

    /// True for errors caused by bad user input (configs, files, arguments)
    /// rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::KindMismatch { .. }
                | Error::CsvCell { .. }
                | Error::Schema { .. }
                | Error::Config { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
