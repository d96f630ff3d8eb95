use gridcast_core::backends::{BackendError, RegistryError};
use gridcast_store::StoreError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Request-level failure with a stable machine-readable code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApiError {
    #[error("unknown grid `{0}`")]
    UnknownGrid(String),
    #[error("{0}")]
    NoData(String),
    #[error("horizon of {requested} hours exceeds the limit of {max}")]
    HorizonTooLong { requested: usize, max: usize },
    #[error("no forecast stored for `{grid}` issued on {date}")]
    NoForecast { grid: String, date: String },
    #[error("{0}")]
    TruthUnavailable(String),
    #[error("{0}")]
    BackendUnavailable(String),
    #[error("{0}")]
    BackendFailed(String),
    #[error("values and mask differ in length: {values} vs {mask}")]
    LengthMismatch { values: usize, mask: usize },
    #[error("every value is masked")]
    AllMissing,
    #[error("series of {len} steps exceeds the limit of {max}")]
    TooLarge { len: usize, max: usize },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("{0}")]
    InvalidMode(String),
    #[error("{0}")]
    InvalidRequest(String),
    #[error("{0}")]
    Internal(String),
}

/// JSON error body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownGrid(_) => "unknown_grid",
            ApiError::NoData(_) => "no_data",
            ApiError::HorizonTooLong { .. } => "horizon_too_long",
            ApiError::NoForecast { .. } => "no_forecast",
            ApiError::TruthUnavailable(_) => "truth_unavailable",
            ApiError::BackendUnavailable(_) => "backend_unavailable",
            ApiError::BackendFailed(_) => "backend_failed",
            ApiError::LengthMismatch { .. } => "length_mismatch",
            ApiError::AllMissing => "all_missing",
            ApiError::TooLarge { .. } => "too_large",
            ApiError::UnknownModel(_) => "unknown_model",
            ApiError::InvalidMode(_) => "invalid_mode",
            ApiError::InvalidRequest(_) => "invalid_request",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ApiError::UnknownGrid(_)
            | ApiError::NoData(_)
            | ApiError::NoForecast { .. }
            | ApiError::UnknownModel(_) => 404,
            ApiError::HorizonTooLong { .. }
            | ApiError::LengthMismatch { .. }
            | ApiError::AllMissing
            | ApiError::InvalidMode(_)
            | ApiError::InvalidRequest(_) => 400,
            ApiError::TooLarge { .. } => 413,
            ApiError::TruthUnavailable(_) => 409,
            ApiError::BackendFailed(_) => 502,
            ApiError::BackendUnavailable(_) => 503,
            ApiError::Internal(_) => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownGrid(g) => ApiError::UnknownGrid(g),
            StoreError::InvalidGridId(g) => ApiError::UnknownGrid(g),
            StoreError::NoData { grid } => ApiError::NoData(format!("no data stored for `{grid}`")),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::BackendUnavailable(m) => ApiError::BackendUnavailable(m),
            BackendError::HorizonTooLong { requested, max } => {
                ApiError::HorizonTooLong { requested, max }
            }
            BackendError::AllMissing => ApiError::AllMissing,
            BackendError::Unsupported { .. } => ApiError::InvalidRequest(e.to_string()),
            other => ApiError::BackendFailed(other.to_string()),
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::UnknownModel(m) => ApiError::UnknownModel(m),
            RegistryError::InvalidMode { .. } | RegistryError::MissingCapability { .. } => {
                ApiError::InvalidMode(e.to_string())
            }
            other => ApiError::InvalidRequest(other.to_string()),
        }
    }
}
