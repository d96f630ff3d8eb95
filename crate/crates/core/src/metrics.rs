//! Evaluation arithmetic: MAPE (mean and tail), coverage, normalized interval
//! width and RMSE on z-scored values, plus the report bundle they feed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hours whose actual is below this (gCO2eq/kWh) are excluded from relative
/// metrics.
pub const EPSILON: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("every actual value is below the exclusion threshold {EPSILON}")]
    AllBelowEpsilon,
    #[error("empty input")]
    Empty,
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("position {0} out of range")]
    PositionOutOfRange(usize),
}

fn check_len(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    Ok(())
}

/// MAPE plus the number of hours it skipped because the actual was below
/// [`EPSILON`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub percent: f64,
    pub evaluated: usize,
    pub excluded: usize,
}

pub fn mape_detailed(actual: &[f64], forecast: &[f64]) -> Result<Mape, MetricsError> {
    check_len(actual.len(), forecast.len())?;
    let mut sum = 0.0;
    let mut evaluated = 0;
    for (&y, &f) in actual.iter().zip(forecast) {
        if y >= EPSILON {
            sum += (y - f).abs() / y;
            evaluated += 1;
        }
    }
    if evaluated == 0 {
        return Err(MetricsError::AllBelowEpsilon);
    }
    Ok(Mape {
        percent: 100.0 * sum / evaluated as f64,
        evaluated,
        excluded: actual.len() - evaluated,
    })
}

pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricsError> {
    mape_detailed(actual, forecast).map(|m| m.percent)
}

/// 1-based order statistic at `ceil(p * n)`, clamped to `[1, n]`.
fn upper_order_statistic(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Aggregate of per-issuance MAPEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMapes {
    pub mean: f64,
    /// 90th percentile over per-issuance MAPEs (the figure reported).
    pub p90: f64,
    /// 90th percentile over individual hourly absolute percentage errors,
    /// kept for comparison.
    pub p90_hourly: f64,
    pub per_issuance: Vec<f64>,
    /// Issuances skipped because every actual was below [`EPSILON`].
    pub skipped: usize,
}

pub fn window_mapes<A, F>(issuances: &[(A, F)]) -> Result<WindowMapes, MetricsError>
where
    A: AsRef<[f64]>,
    F: AsRef<[f64]>,
{
    let mut per_issuance = Vec::with_capacity(issuances.len());
    let mut hourly = Vec::new();
    let mut skipped = 0;
    for (actual, forecast) in issuances {
        let (actual, forecast) = (actual.as_ref(), forecast.as_ref());
        match mape(actual, forecast) {
            Ok(m) => per_issuance.push(m),
            Err(MetricsError::AllBelowEpsilon) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        }
        hourly.extend(
            actual
                .iter()
                .zip(forecast)
                .filter(|(y, _)| **y >= EPSILON)
                .map(|(y, f)| 100.0 * (y - f).abs() / y),
        );
    }
    if per_issuance.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mean = per_issuance.iter().sum::<f64>() / per_issuance.len() as f64;
    Ok(WindowMapes {
        mean,
        p90: upper_order_statistic(&sorted(&per_issuance), 0.9),
        p90_hourly: upper_order_statistic(&sorted(&hourly), 0.9),
        per_issuance,
        skipped,
    })
}

/// Percentage of points with `lower <= actual <= upper` (inclusive).
pub fn coverage(actual: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64, MetricsError> {
    check_len(actual.len(), lower.len())?;
    check_len(actual.len(), upper.len())?;
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = actual
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(y, (l, u))| *l <= *y && *y <= *u)
        .count();
    Ok(100.0 * hits as f64 / actual.len() as f64)
}

/// Mean of `100 * (upper - lower) / actual` over hours with actual >= [`EPSILON`].
pub fn niw(actual: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64, MetricsError> {
    check_len(actual.len(), lower.len())?;
    check_len(actual.len(), upper.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((y, l), u) in actual.iter().zip(lower).zip(upper) {
        if *y >= EPSILON {
            sum += (u - l) / y;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::AllBelowEpsilon);
    }
    Ok(100.0 * sum / n as f64)
}

/// Mean and population standard deviation used for z-scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn from_values(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::Empty);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
        })
    }

    pub fn z(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

pub fn normalized_rmse(
    truth: &[f64],
    estimate: &[f64],
    positions: &[usize],
    stats: NormStats,
) -> Result<f64, MetricsError> {
    check_len(truth.len(), estimate.len())?;
    if positions.is_empty() {
        return Err(MetricsError::Empty);
    }
    if stats.std.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !stats.std.is_finite() {
        return Err(MetricsError::DegenerateSeries);
    }
    let mut sq = 0.0;
    for &p in positions {
        if p >= truth.len() {
            return Err(MetricsError::PositionOutOfRange(p));
        }
        let d = stats.z(truth[p]) - stats.z(estimate[p]);
        sq += d * d;
    }
    Ok((sq / positions.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Forecast4d,
    ForecastExtended,
    Uncertainty,
    Imputation,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Forecast4d => "forecast_4d",
            Protocol::ForecastExtended => "forecast_extended",
            Protocol::Uncertainty => "uncertainty",
            Protocol::Imputation => "imputation",
        };
        f.write_str(s)
    }
}

/// Configuration captured alongside a report so runs are self-describing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub backend: String,
    pub lookback_hours: Option<usize>,
    pub horizon_hours: Option<usize>,
    pub alpha: Option<f64>,
    pub window_days: Option<usize>,
    pub mask_fraction: Option<f64>,
    pub patch_length: Option<usize>,
    pub seed: Option<u64>,
}

/// Per-grid metric bundle for one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub grid_id: String,
    pub protocol: Protocol,
    pub mean_mape: Option<f64>,
    pub p90_mape: Option<f64>,
    /// Which population `p90_mape` is computed over.
    pub p90_basis: String,
    pub p90_mape_hourly: Option<f64>,
    /// Mean MAPE of each horizon day (D1, D2, ...).
    pub mape_by_day: Vec<Option<f64>>,
    pub coverage_overall: Option<f64>,
    pub coverage_by_day: Vec<Option<f64>>,
    pub mean_niw: Option<f64>,
    pub nrmse: Option<f64>,
    pub n_issuances: usize,
    /// Hours left out of MAPE/NIW because the actual was below [`EPSILON`].
    pub excluded_hours: usize,
    pub config: ConfigSnapshot,
}

impl EvalReport {
    pub fn empty(grid_id: &str, protocol: Protocol, config: ConfigSnapshot) -> Self {
        Self {
            grid_id: grid_id.to_string(),
            protocol,
            mean_mape: None,
            p90_mape: None,
            p90_basis: "per_issuance".to_string(),
            p90_mape_hourly: None,
            mape_by_day: Vec::new(),
            coverage_overall: None,
            coverage_by_day: Vec::new(),
            mean_niw: None,
            nrmse: None,
            n_issuances: 0,
            excluded_hours: 0,
            config,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Aligned plain-text table, one row per report: grid, mean, 90th, then
/// interval and imputation columns.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.grid_id.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>8}  {:>9}  {:>8}  {:>8}  {:>5}\n",
        "grid", "mean", "90th", "coverage", "niw", "nrmse", "n"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<width$}  {:>8}  {:>8}  {:>9}  {:>8}  {:>8}  {:>5}\n",
            r.grid_id,
            cell(r.mean_mape),
            cell(r.p90_mape),
            cell(r.coverage_overall),
            cell(r.mean_niw),
            r.nrmse
                .map_or_else(|| "-".to_string(), |x| format!("{x:.4}")),
            r.n_issuances
        ));
    }
    out
}
