//! Periodic retrieval of upstream carbon-intensity exports.
//!
//! A fetch job expands a URL template per grid and date, downloads the
//! payload through a [`Transport`], turns it into a series with a named
//! [`PayloadParser`] and merges it into the [`DataStore`]. Failures are
//! captured per grid and never abort the cycle.

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use gridcast_core::series::{CarbonSeries, Resolution};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::catalog::GridCatalog;
use crate::csvio;
use crate::error::StoreError;
use crate::store::DataStore;

/// Overrides [`FetchJobConfig::period_hours`] when set.
pub const PERIOD_ENV: &str = "GRIDCAST_FETCH_PERIOD_HOURS";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("network error: {0}")]
    Network(String),
    #[error("upstream returned HTTP {0}")]
    Http(u16),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no payload parser named `{0}`")]
    UnknownParser(String),
    #[error("invalid fetch configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl FetchError {
    fn retryable(&self) -> bool {
        match self {
            FetchError::Network(_) => true,
            FetchError::Http(code) => *code >= 500,
            _ => false,
        }
    }

    /// Short machine-readable kind used in summaries.
    pub fn kind(&self) -> &'static str {
        match self {
            FetchError::Network(_) => "NetworkError",
            FetchError::Http(_) => "HttpError",
            FetchError::Parse(_) => "ParseError",
            FetchError::UnknownParser(_) => "UnknownParser",
            FetchError::InvalidConfig(_) => "InvalidConfig",
            FetchError::Store(StoreError::ConflictingValue { .. }) => "ConflictingValue",
            FetchError::Store(StoreError::SchemaViolation { .. }) => "SchemaViolation",
            FetchError::Store(_) => "StoreError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Attempts after the first failure.
    pub retries: u32,
    /// Delay before retry `n` is `n * backoff_ms`.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenHeader {
    pub name: String,
    pub value: String,
}

fn default_parser() -> String {
    "csv".to_string()
}

fn default_period() -> u64 {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchJobConfig {
    /// URL with `{grid}` and `{date}` (YYYY-MM-DD) placeholders. `http`,
    /// `https` and `file` schemes are supported by the default transport.
    pub source_url_template: String,
    #[serde(default = "default_parser")]
    pub parser: String,
    #[serde(default = "default_period")]
    pub period_hours: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub token_header: Option<TokenHeader>,
    /// Replace stored values that disagree with the upstream payload.
    #[serde(default)]
    pub overwrite: bool,
}

impl FetchJobConfig {
    pub fn new(source_url_template: impl Into<String>) -> Self {
        Self {
            source_url_template: source_url_template.into(),
            parser: default_parser(),
            period_hours: default_period(),
            retry: RetryPolicy::default(),
            token_header: None,
            overwrite: false,
        }
    }

    pub fn validate(&self) -> Result<(), FetchError> {
        if self.period_hours < 1 {
            return Err(FetchError::InvalidConfig(
                "period must be at least 1 hour".into(),
            ));
        }
        if !self.source_url_template.contains("{grid}") {
            return Err(FetchError::InvalidConfig(
                "source_url_template needs a {grid} placeholder".into(),
            ));
        }
        Ok(())
    }

    /// Applies the environment override for the schedule period.
    pub fn with_env_overrides(mut self) -> Result<Self, FetchError> {
        if let Ok(v) = std::env::var(PERIOD_ENV) {
            self.period_hours = v.trim().parse().map_err(|_| {
                FetchError::InvalidConfig(format!("{PERIOD_ENV}=`{v}` is not an integer"))
            })?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn period(&self) -> Duration {
        Duration::from_secs(self.period_hours * 3600)
    }

    pub fn url_for(&self, grid_id: &str, day: NaiveDate) -> String {
        self.source_url_template
            .replace("{grid}", grid_id)
            .replace("{date}", &day.format("%Y-%m-%d").to_string())
    }
}

/// Retrieves a payload body.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<String, FetchError>;
}

/// `http(s)` via a blocking HTTP client, `file://` from the local disk.
pub struct DefaultTransport {
    agent: ureq::Agent,
}

impl DefaultTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Default for DefaultTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for DefaultTransport {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<String, FetchError> {
        let parsed =
            Url::parse(url).map_err(|e| FetchError::InvalidConfig(format!("{url}: {e}")))?;
        match parsed.scheme() {
            "file" => {
                let path = parsed
                    .to_file_path()
                    .map_err(|_| FetchError::InvalidConfig(format!("bad file URL {url}")))?;
                std::fs::read_to_string(&path)
                    .map_err(|e| FetchError::Network(format!("{}: {e}", path.display())))
            }
            "http" | "https" => {
                let mut req = self.agent.get(url);
                for (k, v) in headers {
                    req = req.header(k, v);
                }
                let mut resp = req.call().map_err(|e| FetchError::Network(e.to_string()))?;
                let status = resp.status().as_u16();
                if !(200..300).contains(&status) {
                    return Err(FetchError::Http(status));
                }
                resp.body_mut()
                    .read_to_string()
                    .map_err(|e| FetchError::Network(e.to_string()))
            }
            other => Err(FetchError::InvalidConfig(format!(
                "unsupported scheme `{other}`"
            ))),
        }
    }
}

/// Turns a downloaded payload into a series for one grid.
pub trait PayloadParser: Send + Sync {
    fn parse(
        &self,
        grid_id: &str,
        resolution: Resolution,
        body: &str,
    ) -> Result<CarbonSeries, FetchError>;
}

/// Builds a gap-filled series from timestamped rows. Rows need not be
/// sorted; duplicates must agree.
pub fn series_from_rows(
    grid_id: &str,
    resolution: Resolution,
    rows: &[(DateTime<Utc>, Option<f64>)],
) -> Result<CarbonSeries, FetchError> {
    let mut map: BTreeMap<DateTime<Utc>, Option<f64>> = BTreeMap::new();
    for &(ts, v) in rows {
        if !resolution.is_aligned(ts) {
            return Err(FetchError::Parse(format!(
                "timestamp {ts} is not on the {} grid",
                resolution.as_str()
            )));
        }
        match map.insert(ts, v) {
            Some(prev) if prev.is_some() && v.is_some() && prev != v => {
                return Err(FetchError::Parse(format!(
                    "duplicate timestamp {ts} with different values"
                )));
            }
            Some(Some(prev)) if v.is_none() => {
                map.insert(ts, Some(prev));
            }
            _ => {}
        }
    }
    let Some((&start, _)) = map.first_key_value() else {
        return Err(FetchError::Parse("payload has no rows".into()));
    };
    let end = *map.keys().next_back().expect("non-empty");
    let mut values = Vec::new();
    let mut ts = start;
    while ts <= end {
        values.push(map.get(&ts).copied().flatten());
        ts += resolution.step();
    }
    CarbonSeries::new(grid_id, start, resolution, values)
        .map_err(|e| FetchError::Parse(e.to_string()))
}

/// Reads the actuals CSV schema.
pub struct CsvParser;

impl PayloadParser for CsvParser {
    fn parse(
        &self,
        grid_id: &str,
        resolution: Resolution,
        body: &str,
    ) -> Result<CarbonSeries, FetchError> {
        let rows =
            csvio::read_actuals(body, "payload").map_err(|e| FetchError::Parse(e.to_string()))?;
        series_from_rows(grid_id, resolution, &rows)
    }
}

/// Parsers addressable by source name; `csv` is always present.
pub struct ParserRegistry {
    parsers: BTreeMap<String, Box<dyn PayloadParser>>,
}

impl Default for ParserRegistry {
    fn default() -> Self {
        let mut parsers: BTreeMap<String, Box<dyn PayloadParser>> = BTreeMap::new();
        parsers.insert("csv".into(), Box::new(CsvParser));
        Self { parsers }
    }
}

impl ParserRegistry {
    pub fn register(&mut self, name: impl Into<String>, parser: Box<dyn PayloadParser>) {
        self.parsers.insert(name.into(), parser);
    }

    pub fn get(&self, name: &str) -> Result<&dyn PayloadParser, FetchError> {
        self.parsers
            .get(name)
            .map(|p| p.as_ref())
            .ok_or_else(|| FetchError::UnknownParser(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFetchResult {
    pub grid_id: String,
    pub rows_added: usize,
    /// `(kind, message)` when the grid failed.
    pub error: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchSummary {
    pub day: NaiveDate,
    pub grids: Vec<GridFetchResult>,
}

impl FetchSummary {
    pub fn error_count(&self) -> usize {
        self.grids.iter().filter(|g| g.error.is_some()).count()
    }

    pub fn rows_added(&self) -> usize {
        self.grids.iter().map(|g| g.rows_added).sum()
    }
}

fn with_retry<T>(
    policy: RetryPolicy,
    mut f: impl FnMut() -> Result<T, FetchError>,
) -> Result<T, FetchError> {
    let mut attempt = 0;
    loop {
        match f() {
            Err(e) if e.retryable() && attempt < policy.retries => {
                attempt += 1;
                log::warn!("fetch attempt {attempt} failed: {e}; retrying");
                std::thread::sleep(Duration::from_millis(
                    policy.backoff_ms * u64::from(attempt),
                ));
            }
            other => return other,
        }
    }
}

fn fetch_grid(
    config: &FetchJobConfig,
    resolution: Resolution,
    grid_id: &str,
    day: NaiveDate,
    store: &DataStore,
    transport: &dyn Transport,
    parsers: &ParserRegistry,
) -> Result<usize, FetchError> {
    let parser = parsers.get(&config.parser)?;
    let url = config.url_for(grid_id, day);
    let headers: Vec<(String, String)> = config
        .token_header
        .iter()
        .map(|t| (t.name.clone(), t.value.clone()))
        .collect();
    let body = with_retry(config.retry, || transport.get(&url, &headers))?;
    let series = parser.parse(grid_id, resolution, &body)?;
    Ok(store.store_actuals(&series, config.overwrite)?.changed())
}

/// One fetch pass over every catalog grid for `day`.
pub fn run_fetch_cycle(
    config: &FetchJobConfig,
    catalog: &GridCatalog,
    store: &DataStore,
    day: NaiveDate,
    transport: &dyn Transport,
    parsers: &ParserRegistry,
) -> FetchSummary {
    let grids = catalog
        .grids
        .iter()
        .map(|entry| {
            let result = fetch_grid(
                config,
                entry.resolution,
                &entry.grid_id,
                day,
                store,
                transport,
                parsers,
            );
            match result {
                Ok(rows_added) => GridFetchResult {
                    grid_id: entry.grid_id.clone(),
                    rows_added,
                    error: None,
                },
                Err(e) => {
                    log::error!("fetch for grid `{}` failed: {e}", entry.grid_id);
                    GridFetchResult {
                        grid_id: entry.grid_id.clone(),
                        rows_added: 0,
                        error: Some((e.kind().to_string(), e.to_string())),
                    }
                }
            }
        })
        .collect();
    FetchSummary { day, grids }
}
