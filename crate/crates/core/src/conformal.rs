//! Horizon-specific rolling conformal intervals.
//!
//! Each of the 96 horizon hours keeps its own residual history
//! (`actual - forecast`), tagged with the issue day of the forecast that
//! produced it. A horizon-day-`k` residual only becomes known `k - 1` days
//! after the forecast's first day has been observed, so calibration for a new
//! forecast reads, for hour `h`, only residuals from issue days
//! `<= as_of_day - lag(k)`, where `as_of_day` is the last fully observed day.
//!
//! Quantiles are order statistics at rank `ceil((m + 1) p)` clamped to
//! `[1, m]`; intervals are `forecast + [q_lo, q_hi]` with the lower bound
//! clamped at zero.

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::ForecastRecord;
use crate::series::{CarbonSeries, Resolution};

pub const MAX_HORIZON_HOURS: usize = 96;
pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("record is for grid `{record}` but actuals are for `{actual}`")]
    GridMismatch { record: String, actual: String },
    #[error("conformal calibration works on hourly data")]
    ResolutionMismatch,
    #[error("{0} interval sets but {1} actual series")]
    LengthMismatch(usize, usize),
    #[error("coverage level must be in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// Desired coverage level, e.g. 0.95 for 95 %.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageTarget {
    alpha: f64,
}

impl CoverageTarget {
    pub fn new(alpha: f64) -> Result<Self, ConformalError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConformalError::InvalidAlpha(alpha));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Quantile level of the lower residual bound.
    pub fn lower_level(&self) -> f64 {
        (1.0 - self.alpha) / 2.0
    }

    pub fn upper_level(&self) -> f64 {
        (1.0 + self.alpha) / 2.0
    }
}

impl Default for CoverageTarget {
    fn default() -> Self {
        Self { alpha: 0.95 }
    }
}

/// Delay, in days, before horizon-day `k` residuals may be used:
/// `lag(k) = k - 1 + offset`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityLag {
    pub offset: i64,
}

impl AvailabilityLag {
    pub fn days(&self, horizon_day: usize) -> i64 {
        horizon_day as i64 - 1 + self.offset
    }
}

pub fn horizon_day(hour: usize) -> usize {
    hour.div_ceil(HOURS_PER_DAY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalConfig {
    pub target: CoverageTarget,
    /// Calibration window in distinct issue days.
    pub window_days: usize,
    /// Below this many qualifying issue days a horizon-day block falls back
    /// to a relative interval.
    pub min_days: usize,
    /// Relative half-width of the fallback interval.
    pub fallback_width: f64,
    pub lag: AvailabilityLag,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            target: CoverageTarget::default(),
            window_days: 75,
            min_days: 10,
            fallback_width: 0.5,
            lag: AvailabilityLag::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub issue_day: NaiveDate,
    pub residual: f64,
}

/// Extra issue days kept beyond the calibration window, on top of the
/// largest availability lag.
const RETENTION_SLACK_DAYS: i64 = 7;

/// Per-grid residual history, one queue per horizon hour (index 0 = hour 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualLedger {
    pub grid_id: String,
    pub window_days: usize,
    pub lag: AvailabilityLag,
    per_hour: Vec<Vec<ResidualEntry>>,
}

impl ResidualLedger {
    pub fn new(grid_id: impl Into<String>, window_days: usize) -> Self {
        Self::with_lag(grid_id, window_days, AvailabilityLag::default())
    }

    pub fn with_lag(grid_id: impl Into<String>, window_days: usize, lag: AvailabilityLag) -> Self {
        Self {
            grid_id: grid_id.into(),
            window_days,
            lag,
            per_hour: vec![Vec::new(); MAX_HORIZON_HOURS],
        }
    }

    /// Residuals recorded for `hour` (1-based), oldest first.
    pub fn queue(&self, hour: usize) -> &[ResidualEntry] {
        &self.per_hour[hour - 1]
    }

    pub fn is_empty(&self) -> bool {
        self.per_hour.iter().all(Vec::is_empty)
    }

    /// Inserts or replaces the entry for `issue_day` in `hour`'s queue,
    /// keeping it sorted.
    pub fn insert(&mut self, hour: usize, issue_day: NaiveDate, residual: f64) {
        assert!((1..=MAX_HORIZON_HOURS).contains(&hour), "hour out of range");
        assert!(residual.is_finite(), "residuals must be finite");
        let q = &mut self.per_hour[hour - 1];
        let entry = ResidualEntry {
            issue_day,
            residual,
        };
        match q.binary_search_by_key(&issue_day, |e| e.issue_day) {
            Ok(i) => q[i] = entry,
            Err(i) => q.insert(i, entry),
        }
    }

    fn retention_days(&self) -> i64 {
        self.window_days as i64
            + self.lag.days(MAX_HORIZON_HOURS / HOURS_PER_DAY)
            + RETENTION_SLACK_DAYS
    }

    fn trim(&mut self) {
        let Some(newest) = self
            .per_hour
            .iter()
            .filter_map(|q| q.last().map(|e| e.issue_day))
            .max()
        else {
            return;
        };
        let keep = self.retention_days();
        let cutoff = newest - chrono::Duration::days(keep);
        for q in &mut self.per_hour {
            let first_kept = q.partition_point(|e| e.issue_day < cutoff);
            q.drain(..first_kept);
        }
    }

    /// Appends `actual - forecast` for every horizon hour whose ground truth
    /// is present in `actual`. Returns the number of residuals recorded.
    pub fn record_outcome(
        &mut self,
        record: &ForecastRecord,
        actual: &CarbonSeries,
    ) -> Result<usize, ConformalError> {
        if record.grid_id != actual.grid_id() {
            return Err(ConformalError::GridMismatch {
                record: record.grid_id.clone(),
                actual: actual.grid_id().to_string(),
            });
        }
        if actual.resolution() != Resolution::Hourly || record.resolution != Resolution::Hourly {
            return Err(ConformalError::ResolutionMismatch);
        }
        let mut added = 0;
        for (i, &yhat) in record.horizon.iter().take(MAX_HORIZON_HOURS).enumerate() {
            if let Some(y) = actual.value_at(record.target_timestamp(i)) {
                self.insert(i + 1, record.issue_day, y - yhat);
                added += 1;
            }
        }
        self.trim();
        Ok(added)
    }

    /// Residuals for `hour` (1..=96) from issue days on or before
    /// `as_of_day - lag(k)`, limited to the `window_days` most recent
    /// qualifying issue days.
    pub fn available_residuals(&self, hour: usize, as_of_day: NaiveDate) -> Vec<ResidualEntry> {
        assert!((1..=MAX_HORIZON_HOURS).contains(&hour), "hour out of range");
        let lag = self.lag.days(horizon_day(hour));
        let Some(cutoff) = shift_days(as_of_day, -lag) else {
            return Vec::new();
        };
        let q = &self.per_hour[hour - 1];
        let end = q.partition_point(|e| e.issue_day <= cutoff);
        let start = end.saturating_sub(self.window_days);
        q[start..end].to_vec()
    }
}

fn shift_days(day: NaiveDate, delta: i64) -> Option<NaiveDate> {
    if delta >= 0 {
        day.checked_add_days(Days::new(delta as u64))
    } else {
        day.checked_sub_days(Days::new(delta.unsigned_abs()))
    }
}

/// Order statistic at 1-based rank `ceil((m + 1) p)`, clamped to `[1, m]`.
pub fn conformal_rank(m: usize, level: f64) -> usize {
    // The small offset keeps products like 40 * 0.025 from rounding up.
    let raw = ((m + 1) as f64 * level - 1e-9).ceil();
    (raw.max(1.0) as usize).min(m)
}

/// `(q_lo, q_hi)` of a residual sample; `None` when empty.
pub fn residual_quantiles(residuals: &[f64], target: CoverageTarget) -> Option<(f64, f64)> {
    if residuals.is_empty() {
        return None;
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let lo = sorted[conformal_rank(m, target.lower_level()) - 1];
    let hi = sorted[conformal_rank(m, target.upper_level()) - 1];
    Some((lo, hi))
}

/// Per-hour interval bounds for one forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// One flag per horizon-day block; `false` means fallback interval.
    pub calibrated: Vec<bool>,
}

impl IntervalSet {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn is_calibrated_at(&self, index: usize) -> bool {
        self.calibrated
            .get(index / HOURS_PER_DAY)
            .copied()
            .unwrap_or(false)
    }

    pub fn truncate(&mut self, n: usize) {
        self.lower.truncate(n);
        self.upper.truncate(n);
        self.calibrated.truncate(n.div_ceil(HOURS_PER_DAY));
    }
}

/// Quantiles used for one hour, exposed for inspection and testing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourCalibration {
    pub q_lo: f64,
    pub q_hi: f64,
    pub samples: usize,
}

/// The last day whose ground truth is complete when `record` is issued.
pub fn as_of_day(record: &ForecastRecord) -> NaiveDate {
    record
        .issue_day
        .pred_opt()
        .expect("issue day after the minimum date")
}

/// Wraps a point forecast in per-hour conformal intervals.
pub fn calibrate(
    ledger: &ResidualLedger,
    record: &ForecastRecord,
    config: &ConformalConfig,
) -> IntervalSet {
    let n = record.horizon.len().min(MAX_HORIZON_HOURS);
    let as_of = as_of_day(record);
    let blocks = n.div_ceil(HOURS_PER_DAY);
    let mut per_hour: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut block_days = vec![usize::MAX; blocks];
    for i in 0..n {
        let entries = ledger.available_residuals(i + 1, as_of);
        let days: BTreeSet<_> = entries.iter().map(|e| e.issue_day).collect();
        let b = i / HOURS_PER_DAY;
        block_days[b] = block_days[b].min(days.len());
        per_hour.push(entries.into_iter().map(|e| e.residual).collect());
    }
    let calibrated: Vec<bool> = block_days.iter().map(|&d| d >= config.min_days).collect();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for (i, residuals) in per_hour.iter().enumerate() {
        let yhat = record.horizon[i];
        let quantiles = residual_quantiles(residuals, config.target);
        match (calibrated[i / HOURS_PER_DAY], quantiles) {
            (true, Some((q_lo, q_hi))) => {
                lower.push((yhat + q_lo).max(0.0));
                upper.push((yhat + q_hi).max(0.0));
            }
            _ => {
                let w = config.fallback_width;
                lower.push((yhat * (1.0 - w)).max(0.0));
                upper.push(yhat * (1.0 + w));
            }
        }
    }
    IntervalSet {
        lower,
        upper,
        calibrated,
    }
}

/// Quantiles that `calibrate` would use for each hour, ignoring the
/// warm-up fallback.
pub fn hour_calibrations(
    ledger: &ResidualLedger,
    record: &ForecastRecord,
    target: CoverageTarget,
) -> Vec<Option<HourCalibration>> {
    let as_of = as_of_day(record);
    (0..record.horizon.len().min(MAX_HORIZON_HOURS))
        .map(|i| {
            let r: Vec<f64> = ledger
                .available_residuals(i + 1, as_of)
                .into_iter()
                .map(|e| e.residual)
                .collect();
            residual_quantiles(&r, target).map(|(q_lo, q_hi)| HourCalibration {
                q_lo,
                q_hi,
                samples: r.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    /// Percent of hours with known truth inside their interval.
    pub overall: Option<f64>,
    /// Same, split into horizon days 1..=4.
    pub per_day: Vec<Option<f64>>,
    pub hours: usize,
}

/// Coverage of interval sets against aligned actuals: `actuals[i]` starts at
/// the first forecast hour of `intervals[i]`. Hours without truth are skipped.
pub fn coverage_probe(
    intervals: &[IntervalSet],
    actuals: &[CarbonSeries],
) -> Result<CoverageSummary, ConformalError> {
    if intervals.len() != actuals.len() {
        return Err(ConformalError::LengthMismatch(
            intervals.len(),
            actuals.len(),
        ));
    }
    let days = MAX_HORIZON_HOURS / HOURS_PER_DAY;
    let mut hits = vec![0usize; days];
    let mut totals = vec![0usize; days];
    for (iv, actual) in intervals.iter().zip(actuals) {
        for (i, y) in actual.values().iter().take(iv.len()).enumerate() {
            let Some(y) = y else { continue };
            let d = (i / HOURS_PER_DAY).min(days - 1);
            totals[d] += 1;
            if iv.lower[i] <= *y && *y <= iv.upper[i] {
                hits[d] += 1;
            }
        }
    }
    let pct = |h: usize, t: usize| (t > 0).then(|| 100.0 * h as f64 / t as f64);
    let hours: usize = totals.iter().sum();
    Ok(CoverageSummary {
        overall: pct(hits.iter().sum(), hours),
        per_day: hits.iter().zip(&totals).map(|(&h, &t)| pct(h, t)).collect(),
        hours,
    })
}
