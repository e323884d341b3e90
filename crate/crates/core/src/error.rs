use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or resource guard violation.
    #[error("configuration error: {0}")]
    Config(String),

    /// A mesh or data structure violates one of its invariants.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Channel, vertex or level counts do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// API misuse (missing context, empty mask, empty dataset, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed input file. `offset` is the byte offset (or line number for
    /// text formats) where parsing failed.
    #[error("{}: parse error at offset {offset}: {message}", path.display())]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Invariant(_)
        )
    }
}
