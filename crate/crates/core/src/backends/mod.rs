//! Forecaster and imputer backends behind one interface.
//!
//! Native baselines (EWMA, seasonal-naive, interpolating imputers) and remote
//! inference endpoints are interchangeable: callers go through [`forecast`]
//! and [`impute`], which enforce the request invariants, clamp negative
//! outputs to zero and keep observed values untouched.

mod ewma;
mod native_impute;
mod registry;
mod remote;
mod seasonal;

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::IntervalSet;
use crate::series::{CarbonSeries, MaskedSeries, Resolution};

pub use ewma::Ewma;
pub use native_impute::NativeImputer;
pub use registry::{BackendRegistry, RegistryError};
pub use remote::{RemoteBackend, WireForecastRequest, WireImputeRequest, WireResponse};
pub use seasonal::SeasonalNaive;

pub const DEFAULT_REMOTE_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("horizon of {requested} hours exceeds backend limit of {max}")]
    HorizonTooLong { requested: usize, max: usize },
    #[error("lookback of {got} steps is shorter than the required {min}")]
    LookbackTooShort { got: usize, min: usize },
    #[error("lookback contains missing values; impute first")]
    MissingInLookback,
    #[error("horizon must be positive")]
    EmptyHorizon,
    #[error("every value is missing")]
    AllMissing,
    #[error("backend `{name}` does not support {capability}")]
    Unsupported {
        name: String,
        capability: Capability,
    },
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
}

/// Zero-shot or fine-tuned operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "ZS")]
    ZeroShot,
    #[serde(rename = "FT")]
    FineTuned,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::ZeroShot => "ZS",
            Mode::FineTuned => "FT",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "ZS" => Ok(Mode::ZeroShot),
            "FT" => Ok(Mode::FineTuned),
            _ => Err(format!("unknown mode `{s}` (expected ZS or FT)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Forecast,
    Impute,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Forecast => "forecast",
            Capability::Impute => "impute",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub mode: Mode,
    pub capabilities: BTreeSet<Capability>,
    /// `None` means unbounded.
    pub max_horizon: Option<usize>,
}

impl BackendDescriptor {
    pub fn new(name: impl Into<String>, mode: Mode, capabilities: &[Capability]) -> Self {
        Self {
            name: name.into(),
            mode,
            capabilities: capabilities.iter().copied().collect(),
            max_horizon: None,
        }
    }

    pub fn with_max_horizon(mut self, hours: usize) -> Self {
        self.max_horizon = Some(hours);
        self
    }

    pub fn supports(&self, capability: Capability) -> bool {
        self.capabilities.contains(&capability)
    }

    pub fn is_remote(&self) -> bool {
        self.name.starts_with("remote:")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRequest {
    pub grid_id: String,
    pub lookback: CarbonSeries,
    pub horizon_hours: usize,
}

impl ForecastRequest {
    pub fn new(lookback: CarbonSeries, horizon_hours: usize) -> Self {
        Self {
            grid_id: lookback.grid_id().to_string(),
            lookback,
            horizon_hours,
        }
    }

    pub fn horizon_steps(&self) -> usize {
        self.horizon_hours * self.lookback.resolution().steps_per_hour()
    }

    /// Timestamp of the first forecast step, right after the lookback.
    pub fn forecast_start(&self) -> DateTime<Utc> {
        self.lookback.end()
    }
}

/// One issuance: point forecast plus optional calibrated interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub grid_id: String,
    /// UTC day of the first forecast step.
    pub issue_day: NaiveDate,
    pub start: DateTime<Utc>,
    pub resolution: Resolution,
    pub horizon: Vec<f64>,
    pub backend: BackendDescriptor,
    pub interval: Option<IntervalSet>,
}

impl ForecastRecord {
    pub fn target_timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + self.resolution.step() * index as i32
    }

    /// Keeps only the first `hours` steps (point values and interval).
    pub fn truncated(&self, hours: usize) -> Self {
        let n = (hours * self.resolution.steps_per_hour()).min(self.horizon.len());
        let mut out = self.clone();
        out.horizon.truncate(n);
        if let Some(iv) = out.interval.as_mut() {
            iv.truncate(n);
        }
        out
    }
}

/// Implemented by every backend. Callers should use [`forecast`] and
/// [`impute`] rather than these methods directly.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Minimum lookback in steps for the given resolution.
    fn min_lookback(&self, _resolution: Resolution) -> usize {
        1
    }

    /// Raw point forecast of `req.horizon_steps()` values.
    fn predict(&self, req: &ForecastRequest) -> Result<Vec<f64>, BackendError> {
        let _ = req;
        Err(BackendError::Unsupported {
            name: self.descriptor().name.clone(),
            capability: Capability::Forecast,
        })
    }

    /// Raw reconstruction of the whole series, one value per position.
    fn fill(&self, masked: &MaskedSeries) -> Result<Vec<f64>, BackendError> {
        let _ = masked;
        Err(BackendError::Unsupported {
            name: self.descriptor().name.clone(),
            capability: Capability::Impute,
        })
    }
}

fn clamp_non_negative(name: &str, values: &mut [f64]) -> Result<(), BackendError> {
    let mut clamped = 0usize;
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(BackendError::InvalidResponse(format!(
                "backend `{name}` returned a non-finite value"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
            clamped += 1;
        }
    }
    if clamped > 0 {
        log::warn!("backend `{name}` produced {clamped} negative values; clamped to 0");
    }
    Ok(())
}

/// Runs a point forecast. The record has no interval; see
/// [`crate::conformal::calibrate`].
pub fn forecast(
    backend: &dyn Backend,
    req: &ForecastRequest,
) -> Result<ForecastRecord, BackendError> {
    let desc = backend.descriptor();
    if !desc.supports(Capability::Forecast) {
        return Err(BackendError::Unsupported {
            name: desc.name.clone(),
            capability: Capability::Forecast,
        });
    }
    if req.horizon_hours == 0 {
        return Err(BackendError::EmptyHorizon);
    }
    if let Some(max) = desc.max_horizon {
        if req.horizon_hours > max {
            return Err(BackendError::HorizonTooLong {
                requested: req.horizon_hours,
                max,
            });
        }
    }
    if !req.lookback.is_complete() {
        return Err(BackendError::MissingInLookback);
    }
    let min = backend.min_lookback(req.lookback.resolution());
    if req.lookback.len() < min {
        return Err(BackendError::LookbackTooShort {
            got: req.lookback.len(),
            min,
        });
    }
    let mut values = backend.predict(req)?;
    if values.len() != req.horizon_steps() {
        return Err(BackendError::InvalidResponse(format!(
            "expected {} values, got {}",
            req.horizon_steps(),
            values.len()
        )));
    }
    clamp_non_negative(&desc.name, &mut values)?;
    let start = req.forecast_start();
    Ok(ForecastRecord {
        grid_id: req.grid_id.clone(),
        issue_day: start.date_naive(),
        start,
        resolution: req.lookback.resolution(),
        horizon: values,
        backend: desc.clone(),
        interval: None,
    })
}

/// Fills every missing position. Observed positions are copied from the
/// input, whatever the backend returned for them.
pub fn impute(backend: &dyn Backend, masked: &MaskedSeries) -> Result<CarbonSeries, BackendError> {
    let desc = backend.descriptor();
    if !desc.supports(Capability::Impute) {
        return Err(BackendError::Unsupported {
            name: desc.name.clone(),
            capability: Capability::Impute,
        });
    }
    if masked.observed_count() == 0 {
        return Err(BackendError::AllMissing);
    }
    let series = masked.series();
    if masked.observed_count() == masked.len() {
        return Ok(series.clone());
    }
    let mut filled = backend.fill(masked)?;
    if filled.len() != masked.len() {
        return Err(BackendError::InvalidResponse(format!(
            "expected {} values, got {}",
            masked.len(),
            filled.len()
        )));
    }
    clamp_non_negative(&desc.name, &mut filled)?;
    let values = series
        .values()
        .iter()
        .zip(filled)
        .map(|(orig, est)| Some(orig.unwrap_or(est)))
        .collect();
    Ok(series
        .with_values(values)
        .expect("finite non-negative values form a valid series"))
}
