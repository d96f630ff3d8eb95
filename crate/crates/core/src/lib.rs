//! Core types for carbon-intensity forecasting and gap filling.
//!
//! - [`series`]: validated hourly or 5-minute series and missing-value masks
//! - [`backends`]: forecaster and imputer backends, native and remote
//! - [`conformal`]: per-horizon rolling conformal intervals
//! - [`imputation`]: mask generation and interpolating imputers
//! - [`metrics`]: MAPE, coverage, interval width and normalised RMSE

pub mod backends;
pub mod conformal;
pub mod imputation;
pub mod metrics;
pub mod series;

pub use backends::{
    forecast, impute, Backend, BackendDescriptor, BackendError, BackendRegistry, Capability,
    ForecastRecord, ForecastRequest, Mode,
};
pub use conformal::{calibrate, ConformalConfig, CoverageTarget, IntervalSet, ResidualLedger};
pub use imputation::{ImputeMethod, MaskPlan};
pub use series::{CarbonSeries, MaskedSeries, Resolution, SeriesError};
