use std::path::PathBuf;

use chrono::{DateTime, Utc};
use gridcast_core::series::SeriesError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown grid `{0}`")]
    UnknownGrid(String),
    #[error("`{0}` is not a valid grid id (use letters, digits, `-`, `_` or `.`)")]
    InvalidGridId(String),
    #[error("no data for grid `{grid}` in the requested range")]
    NoData { grid: String },
    #[error("conflicting value at {timestamp}: stored {stored}, new {new}")]
    ConflictingValue {
        timestamp: DateTime<Utc>,
        stored: String,
        new: String,
    },
    #[error("schema violation in {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl std::fmt::Display, reason: impl Into<String>) -> Self {
        StoreError::SchemaViolation {
            path: path.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;
