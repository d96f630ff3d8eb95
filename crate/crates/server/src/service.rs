//! Transport-independent operations shared by the HTTP API and the CLI.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Days, NaiveDate, Utc};
use gridcast_core::backends::{
    self, BackendRegistry, Capability, ForecastRecord, ForecastRequest, Mode,
};
use gridcast_core::conformal::{self, ResidualLedger, HOURS_PER_DAY};
use gridcast_core::metrics::{self, MetricsError};
use gridcast_core::series::{day_start, missing_mask, CarbonSeries, Resolution};
use gridcast_store::csvio::format_timestamp;
use gridcast_store::{
    run_fetch_cycle, CatalogEntry, DataStore, DefaultTransport, FetchSummary, ParserRegistry,
};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ServiceConfig};
use crate::error::ApiError;

const MODEL_STATE: &str = "model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridsResponse {
    pub grids: Vec<CatalogEntry>,
}

/// One step of stored actuals; `value` is `null` when missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalPoint {
    pub timestamp: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastSource {
    Stored,
    OnDemand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub timestamp: String,
    pub yhat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub grid_id: String,
    pub issue_day: NaiveDate,
    pub backend: String,
    pub mode: Mode,
    pub source: ForecastSource,
    pub horizon_hours: usize,
    pub points: Vec<ForecastPoint>,
    /// Per horizon day, whether the interval came from enough residuals.
    /// Present only when intervals were requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResponse {
    pub grid_id: String,
    pub issue_day: NaiveDate,
    pub horizon_hours: usize,
    pub mape: f64,
    /// Hours with truth that entered the average.
    pub evaluated_hours: usize,
    /// Hours with truth below the near-zero threshold.
    pub excluded_hours: usize,
}

/// Imputation payload. `mask[i] == 0` marks a missing value; `values[i]`
/// is ignored there and may be `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputeRequest {
    #[serde(default)]
    pub grid_id: Option<String>,
    #[serde(default)]
    pub start: Option<DateTime<Utc>>,
    #[serde(default)]
    pub resolution: Option<Resolution>,
    pub values: Vec<Option<f64>>,
    pub mask: Vec<u8>,
    #[serde(default)]
    pub method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeResponse {
    pub method: String,
    pub start: String,
    pub resolution: Resolution,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub model: String,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub forecaster: Option<String>,
    pub imputer: Option<String>,
}

/// Datastore, backends and configuration behind every operation.
pub struct Service {
    config: ServiceConfig,
    store: DataStore,
    registry: BackendRegistry,
    issuing: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

#[derive(Debug, thiserror::Error)]
pub enum OpenError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] gridcast_store::StoreError),
}

/// Parses a `YYYY-MM-DD` day.
pub fn parse_date(s: &str) -> Result<NaiveDate, ApiError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| ApiError::InvalidRequest(format!("invalid date `{s}` (expected YYYY-MM-DD)")))
}

pub(crate) fn shift(day: NaiveDate, days: i64) -> NaiveDate {
    let d = Days::new(days.unsigned_abs());
    let out = if days >= 0 {
        day.checked_add_days(d)
    } else {
        day.checked_sub_days(d)
    };
    out.expect("date in range")
}

impl Service {
    /// Opens the datastore under `config.data_root` and restores the
    /// persisted model selection.
    pub fn open(config: ServiceConfig) -> Result<Self, OpenError> {
        let store = DataStore::open(&config.data_root)?;
        let registry = config.build_registry()?;
        let svc = Self::new(config, store, registry);
        if let Some(state) = svc.store.read_state::<ModelState>(MODEL_STATE)? {
            if let Err(e) = svc.registry.set_model(&state.model, state.mode) {
                log::warn!("ignoring persisted model `{}`: {e}", state.model);
            }
        }
        Ok(svc)
    }

    pub fn new(config: ServiceConfig, store: DataStore, registry: BackendRegistry) -> Self {
        Self {
            config,
            store,
            registry,
            issuing: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &DataStore {
        &self.store
    }

    pub fn registry(&self) -> &BackendRegistry {
        &self.registry
    }

    pub(crate) fn issuance_lock(&self, grid_id: &str) -> Arc<Mutex<()>> {
        self.issuing
            .lock()
            .expect("issuance map poisoned")
            .entry(grid_id.to_string())
            .or_default()
            .clone()
    }

    pub fn grids(&self) -> GridsResponse {
        GridsResponse {
            grids: self.store.catalog().grids,
        }
    }

    /// Stored actuals for one UTC day.
    pub fn ci_historical(
        &self,
        grid_id: &str,
        date: NaiveDate,
    ) -> Result<Vec<HistoricalPoint>, ApiError> {
        self.store.grid(grid_id)?;
        let series = self.store.load_actuals(grid_id, date, date)?;
        if series.count_present() == 0 {
            return Err(ApiError::NoData(format!(
                "no actuals for `{grid_id}` on {date}"
            )));
        }
        Ok(series
            .iter()
            .map(|(ts, value)| HistoricalPoint {
                timestamp: format_timestamp(ts),
                value,
            })
            .collect())
    }

    fn check_horizon(&self, horizon: usize) -> Result<(), ApiError> {
        if horizon == 0 {
            return Err(ApiError::InvalidRequest(
                "horizon must be at least 1 hour".into(),
            ));
        }
        if horizon > self.config.max_horizon_hours {
            return Err(ApiError::HorizonTooLong {
                requested: horizon,
                max: self.config.max_horizon_hours,
            });
        }
        Ok(())
    }

    pub(crate) fn ledger_for(&self, grid_id: &str) -> Result<ResidualLedger, ApiError> {
        let cfg = self.config.conformal();
        let mut ledger = self
            .store
            .load_ledger(grid_id)?
            .unwrap_or_else(|| ResidualLedger::with_lag(grid_id, cfg.window_days, cfg.lag));
        ledger.window_days = cfg.window_days;
        ledger.lag = cfg.lag;
        Ok(ledger)
    }

    /// Lookback ending just before `issue_day`, with gaps filled by the
    /// default imputer. Returns the series and the number of filled steps.
    pub(crate) fn lookback(
        &self,
        grid_id: &str,
        issue_day: NaiveDate,
    ) -> Result<(CarbonSeries, usize), ApiError> {
        let from = shift(issue_day, -(self.config.lookback_days as i64));
        let raw = self
            .store
            .load_actuals(grid_id, from, shift(issue_day, -1))?;
        if raw.count_present() == 0 {
            return Err(ApiError::NoData(format!(
                "no actuals for `{grid_id}` in the {}-day lookback before {issue_day}",
                self.config.lookback_days
            )));
        }
        if raw.is_complete() {
            return Ok((raw, 0));
        }
        let missing = raw.len() - raw.count_present();
        let imputer = self
            .registry
            .default_imputer()
            .ok_or_else(|| ApiError::Internal("no default imputer".into()))?;
        Ok((
            backends::impute(imputer.as_ref(), &missing_mask(&raw))?,
            missing,
        ))
    }

    /// Point forecast for `issue_day` from the default forecaster, with
    /// intervals from the stored ledger. Nothing is written.
    pub(crate) fn compute_forecast(
        &self,
        grid_id: &str,
        issue_day: NaiveDate,
        ledger: &ResidualLedger,
    ) -> Result<(ForecastRecord, usize), ApiError> {
        let entry = self.store.grid(grid_id)?;
        if entry.resolution != Resolution::Hourly {
            return Err(ApiError::InvalidRequest(format!(
                "grid `{grid_id}` holds {} data; forecasting needs hourly data",
                entry.resolution.as_str()
            )));
        }
        let (lookback, imputed) = self.lookback(grid_id, issue_day)?;
        let backend = self
            .registry
            .default_forecaster()
            .ok_or_else(|| ApiError::Internal("no default forecaster".into()))?;
        let req = ForecastRequest::new(lookback, self.config.max_horizon_hours);
        let mut record = backends::forecast(backend.as_ref(), &req)?;
        debug_assert_eq!(record.issue_day, issue_day);
        record.interval = Some(conformal::calibrate(
            ledger,
            &record,
            &self.config.conformal(),
        ));
        Ok((record, imputed))
    }

    /// Forecast issued on `date`, truncated to `horizon` hours (default:
    /// the configured maximum). `on_demand` allows computing a missing one.
    pub fn ci_forecast(
        &self,
        grid_id: &str,
        date: NaiveDate,
        horizon: Option<usize>,
        pi: bool,
        on_demand: bool,
    ) -> Result<ForecastResponse, ApiError> {
        let horizon = horizon.unwrap_or(self.config.max_horizon_hours);
        self.check_horizon(horizon)?;
        self.store.grid(grid_id)?;
        let (mut record, source) = match self.store.load_forecast(grid_id, date)? {
            Some(r) => (r, ForecastSource::Stored),
            None if on_demand => {
                let ledger = self.ledger_for(grid_id)?;
                (
                    self.compute_forecast(grid_id, date, &ledger)?.0,
                    ForecastSource::OnDemand,
                )
            }
            None => {
                return Err(ApiError::NoForecast {
                    grid: grid_id.to_string(),
                    date: date.to_string(),
                })
            }
        };
        if pi && record.interval.is_none() {
            let ledger = self.ledger_for(grid_id)?;
            record.interval = Some(conformal::calibrate(
                &ledger,
                &record,
                &self.config.conformal(),
            ));
        }
        let record = record.truncated(horizon);
        let interval = record.interval.as_ref().filter(|_| pi);
        let points = record
            .horizon
            .iter()
            .enumerate()
            .map(|(i, &yhat)| ForecastPoint {
                timestamp: format_timestamp(record.target_timestamp(i)),
                yhat,
                lower: interval.map(|iv| iv.lower[i]),
                upper: interval.map(|iv| iv.upper[i]),
            })
            .collect::<Vec<_>>();
        Ok(ForecastResponse {
            grid_id: record.grid_id.clone(),
            issue_day: record.issue_day,
            backend: record.backend.name.clone(),
            mode: record.backend.mode,
            source,
            horizon_hours: points.len() / record.resolution.steps_per_hour(),
            calibrated: interval.map(|iv| iv.calibrated.clone()),
            points,
        })
    }

    /// MAPE of the stored forecast over its first `horizon` hours, using
    /// whatever truth is stored for them.
    pub fn accuracy(
        &self,
        grid_id: &str,
        date: NaiveDate,
        horizon: Option<usize>,
    ) -> Result<AccuracyResponse, ApiError> {
        let horizon = horizon.unwrap_or(self.config.max_horizon_hours);
        self.check_horizon(horizon)?;
        let record = self
            .store
            .load_forecast(grid_id, date)?
            .ok_or_else(|| ApiError::NoForecast {
                grid: grid_id.to_string(),
                date: date.to_string(),
            })?
            .truncated(horizon);
        let end = record.target_timestamp(record.horizon.len());
        let truth = self.store.load_range(grid_id, record.start, end)?;
        let (actual, forecast): (Vec<f64>, Vec<f64>) = truth
            .values()
            .iter()
            .zip(&record.horizon)
            .filter_map(|(y, f)| y.map(|y| (y, *f)))
            .unzip();
        let unavailable = || {
            ApiError::TruthUnavailable(format!(
                "no usable ground truth for `{grid_id}` in the first {horizon} hours after {date}"
            ))
        };
        if actual.is_empty() {
            return Err(unavailable());
        }
        let m = match metrics::mape_detailed(&actual, &forecast) {
            Ok(m) => m,
            Err(MetricsError::AllBelowEpsilon) => return Err(unavailable()),
            Err(e) => return Err(ApiError::Internal(e.to_string())),
        };
        Ok(AccuracyResponse {
            grid_id: grid_id.to_string(),
            issue_day: record.issue_day,
            horizon_hours: record.horizon.len() / record.resolution.steps_per_hour(),
            mape: m.percent,
            evaluated_hours: m.evaluated,
            excluded_hours: m.excluded,
        })
    }

    pub fn impute(&self, req: &ImputeRequest) -> Result<ImputeResponse, ApiError> {
        if req.values.len() != req.mask.len() {
            return Err(ApiError::LengthMismatch {
                values: req.values.len(),
                mask: req.mask.len(),
            });
        }
        if req.values.len() > self.config.max_impute_len {
            return Err(ApiError::TooLarge {
                len: req.values.len(),
                max: self.config.max_impute_len,
            });
        }
        let mut values = Vec::with_capacity(req.values.len());
        for (i, (&v, &m)) in req.values.iter().zip(&req.mask).enumerate() {
            match (m, v) {
                (0, _) => values.push(None),
                (1, Some(x)) => values.push(Some(x)),
                (1, None) => {
                    return Err(ApiError::InvalidRequest(format!(
                        "position {i} is marked observed but is null"
                    )))
                }
                _ => {
                    return Err(ApiError::InvalidRequest(format!(
                        "mask entries must be 0 or 1, got {m}"
                    )))
                }
            }
        }
        if values.iter().all(Option::is_none) {
            return Err(ApiError::AllMissing);
        }
        let resolution = req.resolution.unwrap_or(Resolution::Hourly);
        let start = req.start.unwrap_or(DateTime::UNIX_EPOCH);
        let grid = req.grid_id.as_deref().unwrap_or("request");
        let series = CarbonSeries::new(grid, start, resolution, values)
            .map_err(|e| ApiError::InvalidRequest(e.to_string()))?;
        let backend = match &req.method {
            Some(name) => self.registry.resolve(name)?,
            None => self
                .registry
                .default_imputer()
                .ok_or_else(|| ApiError::Internal("no default imputer".into()))?,
        };
        if !backend.descriptor().supports(Capability::Impute) {
            return Err(ApiError::InvalidRequest(format!(
                "`{}` cannot impute",
                backend.descriptor().name
            )));
        }
        let filled = backends::impute(backend.as_ref(), &missing_mask(&series))?;
        Ok(ImputeResponse {
            method: backend.descriptor().name.clone(),
            start: format_timestamp(start),
            resolution,
            values: filled.dense_values().expect("imputation fills every value"),
        })
    }

    pub fn current_model(&self) -> ModelResponse {
        ModelResponse {
            forecaster: self
                .registry
                .default_forecaster()
                .map(|b| b.descriptor().name.clone()),
            imputer: self
                .registry
                .default_imputer()
                .map(|b| b.descriptor().name.clone()),
        }
    }

    /// Makes `model` the default for its capabilities and persists the
    /// choice.
    pub fn set_model(&self, model: &str, mode: &str) -> Result<ModelResponse, ApiError> {
        let mode: Mode = mode.parse().map_err(ApiError::InvalidMode)?;
        self.registry.resolve(model)?;
        self.registry.set_model(model, mode)?;
        self.store.write_state(
            MODEL_STATE,
            &ModelState {
                model: model.to_string(),
                mode,
            },
        )?;
        Ok(self.current_model())
    }

    /// One fetch cycle for every catalog grid.
    pub fn fetch(&self, day: NaiveDate) -> Result<FetchSummary, ApiError> {
        let cfg = self.config.fetch.as_ref().ok_or_else(|| {
            ApiError::InvalidRequest("no [fetch] section in the configuration".into())
        })?;
        Ok(run_fetch_cycle(
            cfg,
            &self.store.catalog(),
            &self.store,
            day,
            &DefaultTransport::default(),
            &ParserRegistry::default(),
        ))
    }

    /// Start of the day after the last hour of truth usable at `issue_day`.
    pub(crate) fn truth_cutoff(issue_day: NaiveDate) -> DateTime<Utc> {
        day_start(issue_day)
    }

    pub(crate) fn blocks(hours: usize) -> usize {
        hours.div_ceil(HOURS_PER_DAY)
    }
}
