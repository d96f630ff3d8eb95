use gridcast_core::backends::{BackendError, RegistryError};
use gridcast_core::imputation::ImputeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid protocol spec: {0}")]
    InvalidSpec(String),
    #[error("unknown grid `{0}`")]
    UnknownGrid(String),
    #[error("grid `{grid}` has {available} usable days, needs {needed}")]
    InsufficientHistory {
        grid: String,
        needed: usize,
        available: usize,
    },
    #[error("grid `{0}` has missing values in the evaluated segment")]
    IncompleteTruth(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error("data source: {0}")]
    Source(String),
    #[error("report output: {0}")]
    Output(String),
}
