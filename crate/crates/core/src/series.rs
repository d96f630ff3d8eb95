//! Canonical carbon-intensity series and the small amount of arithmetic that
//! lives directly on it.
//!
//! All timestamps are UTC and a day starts at 00:00 UTC. Missing values are
//! `None`; there are no sentinel numbers anywhere in the pipeline.

use chrono::{DateTime, Duration, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("value {value} at index {index} is negative or not finite")]
    InvalidValue { index: usize, value: f64 },
    #[error("start {0} is not aligned to the series resolution")]
    MisalignedStart(DateTime<Utc>),
    #[error("window offset {offset} + length {length} exceeds series length {len}")]
    OutOfBounds {
        offset: usize,
        length: usize,
        len: usize,
    },
    #[error("window length must be positive")]
    EmptyWindow,
    #[error("total generation is zero")]
    ZeroGeneration,
    #[error(
        "invalid source mix entry {0}: generation and emission factor must be finite and >= 0"
    )]
    InvalidMixEntry(String),
    #[error("fewer than one full day of aligned values remain")]
    TooShort,
    #[error("operation requires hourly resolution")]
    NotHourly,
}

/// Sampling resolution of a series. It never changes within one series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Hourly,
    FiveMinute,
}

impl Resolution {
    pub fn step(self) -> Duration {
        match self {
            Resolution::Hourly => Duration::hours(1),
            Resolution::FiveMinute => Duration::minutes(5),
        }
    }

    pub fn step_minutes(self) -> u32 {
        match self {
            Resolution::Hourly => 60,
            Resolution::FiveMinute => 5,
        }
    }

    /// Steps in one UTC day: 24 or 288.
    pub fn steps_per_day(self) -> usize {
        (24 * 60 / self.step_minutes()) as usize
    }

    pub fn steps_per_hour(self) -> usize {
        (60 / self.step_minutes()) as usize
    }

    pub fn is_aligned(self, ts: DateTime<Utc>) -> bool {
        ts.second() == 0 && ts.nanosecond() == 0 && ts.minute().is_multiple_of(self.step_minutes())
    }

    /// Index of `ts` within its day (hour-of-day for hourly data).
    pub fn phase_of(self, ts: DateTime<Utc>) -> usize {
        ((ts.hour() * 60 + ts.minute()) / self.step_minutes()) as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Hourly => "hourly",
            Resolution::FiveMinute => "five_minute",
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hourly" | "1h" => Ok(Resolution::Hourly),
            "five_minute" | "5min" | "5m" => Ok(Resolution::FiveMinute),
            other => Err(format!("unknown resolution `{other}`")),
        }
    }
}

/// Midnight UTC of `day`.
pub fn day_start(day: NaiveDate) -> DateTime<Utc> {
    day.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
}

/// A grid's UTC-aligned carbon-intensity sequence (gCO2eq/kWh) with explicit
/// missingness. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonSeries {
    grid_id: String,
    start: DateTime<Utc>,
    resolution: Resolution,
    values: Vec<Option<f64>>,
}

impl CarbonSeries {
    /// Validates alignment and that every present value is finite and >= 0.
    /// Negative values are rejected, never clamped.
    pub fn new(
        grid_id: impl Into<String>,
        start: DateTime<Utc>,
        resolution: Resolution,
        values: Vec<Option<f64>>,
    ) -> Result<Self, SeriesError> {
        if !resolution.is_aligned(start) {
            return Err(SeriesError::MisalignedStart(start));
        }
        for (index, v) in values.iter().enumerate() {
            if let Some(value) = *v {
                if !value.is_finite() || value < 0.0 {
                    return Err(SeriesError::InvalidValue { index, value });
                }
            }
        }
        Ok(Self {
            grid_id: grid_id.into(),
            start,
            resolution,
            values,
        })
    }

    /// Convenience constructor for fully observed data.
    pub fn from_values(
        grid_id: impl Into<String>,
        start: DateTime<Utc>,
        resolution: Resolution,
        values: &[f64],
    ) -> Result<Self, SeriesError> {
        Self::new(
            grid_id,
            start,
            resolution,
            values.iter().copied().map(Some).collect(),
        )
    }

    pub fn grid_id(&self) -> &str {
        &self.grid_id
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + self.resolution.step() * index as i32
    }

    /// Exclusive end of the series.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len())
    }

    /// Index of `ts` if it falls on a step inside the series.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let offset = ts - self.start;
        let step = self.resolution.step();
        if offset < Duration::zero() || offset.num_seconds() % step.num_seconds() != 0 {
            return None;
        }
        let idx = (offset.num_seconds() / step.num_seconds()) as usize;
        (idx < self.len()).then_some(idx)
    }

    pub fn value_at(&self, ts: DateTime<Utc>) -> Option<f64> {
        self.index_of(ts).and_then(|i| self.values[i])
    }

    pub fn count_present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// Present values in order; `None` when any value is missing.
    pub fn dense_values(&self) -> Option<Vec<f64>> {
        self.values.iter().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DateTime<Utc>, Option<f64>)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.timestamp(i), *v))
    }

    /// Same grid, start and resolution with different values.
    pub fn with_values(&self, values: Vec<Option<f64>>) -> Result<Self, SeriesError> {
        Self::new(self.grid_id.clone(), self.start, self.resolution, values)
    }

    pub fn slice(&self, window: Window) -> Result<Self, SeriesError> {
        slice(self, window)
    }
}

/// One electricity source's contribution to a grid mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub source: String,
    /// kWh generated.
    pub generation: f64,
    /// gCO2eq/kWh.
    pub emission_factor: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceMix {
    pub entries: Vec<SourceEntry>,
}

impl SourceMix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, source: &str, generation: f64, emission_factor: f64) -> Self {
        self.entries.push(SourceEntry {
            source: source.to_string(),
            generation,
            emission_factor,
        });
        self
    }
}

/// Generation-weighted average of per-source emission factors.
pub fn compute_carbon_intensity(mix: &SourceMix) -> Result<f64, SeriesError> {
    let mut weighted = 0.0;
    let mut total = 0.0;
    for e in &mix.entries {
        let ok = e.generation.is_finite()
            && e.generation >= 0.0
            && e.emission_factor.is_finite()
            && e.emission_factor >= 0.0;
        if !ok {
            return Err(SeriesError::InvalidMixEntry(e.source.clone()));
        }
        weighted += e.generation * e.emission_factor;
        total += e.generation;
    }
    if total <= 0.0 {
        return Err(SeriesError::ZeroGeneration);
    }
    // Rounding can push the ratio a hair outside [min, max] factor.
    let (lo, hi) = mix
        .entries
        .iter()
        .filter(|e| e.generation > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e.emission_factor), hi.max(e.emission_factor))
        });
    Ok((weighted / total).clamp(lo, hi))
}

/// A contiguous index range: `offset..offset + length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub offset: usize,
    pub length: usize,
}

impl Window {
    pub fn new(offset: usize, length: usize) -> Self {
        Self { offset, length }
    }

    pub fn end(&self) -> usize {
        self.offset + self.length
    }
}

pub fn slice(series: &CarbonSeries, window: Window) -> Result<CarbonSeries, SeriesError> {
    if window.length == 0 {
        return Err(SeriesError::EmptyWindow);
    }
    if window.end() > series.len() {
        return Err(SeriesError::OutOfBounds {
            offset: window.offset,
            length: window.length,
            len: series.len(),
        });
    }
    Ok(CarbonSeries {
        grid_id: series.grid_id.clone(),
        start: series.timestamp(window.offset),
        resolution: series.resolution,
        values: series.values[window.offset..window.end()].to_vec(),
    })
}

/// A series paired with its binary observation mask (`true` = observed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSeries {
    series: CarbonSeries,
    mask: Vec<bool>,
}

impl MaskedSeries {
    /// Hides every position whose mask bit is `false`. Masked positions lose
    /// their value; observed positions must carry one.
    pub fn from_mask(series: &CarbonSeries, mask: Vec<bool>) -> Result<Self, MaskError> {
        if mask.len() != series.len() {
            return Err(MaskError::LengthMismatch {
                mask: mask.len(),
                series: series.len(),
            });
        }
        let values = series
            .values()
            .iter()
            .zip(&mask)
            .enumerate()
            .map(|(i, (v, &m))| match (m, v) {
                (true, Some(x)) => Ok(Some(*x)),
                (true, None) => Err(MaskError::ObservedButMissing(i)),
                (false, _) => Ok(None),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let series = series
            .with_values(values)
            .expect("subset of a valid series is valid");
        Ok(Self { series, mask })
    }

    pub fn series(&self) -> &CarbonSeries {
        &self.series
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn missing_positions(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (!m).then_some(i))
            .collect()
    }

    /// Mask as 0/1 integers, the wire encoding.
    pub fn mask_bits(&self) -> Vec<u8> {
        self.mask.iter().map(|&m| u8::from(m)).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("mask length {mask} does not match series length {series}")]
    LengthMismatch { mask: usize, series: usize },
    #[error("position {0} is marked observed but has no value")]
    ObservedButMissing(usize),
}

/// Mask bit is 0 exactly where the value is absent.
pub fn missing_mask(series: &CarbonSeries) -> MaskedSeries {
    let mask = series.values().iter().map(Option::is_some).collect();
    MaskedSeries {
        series: series.clone(),
        mask,
    }
}

/// Trims leading and trailing partial days so the result starts at 00:00 UTC
/// and spans whole days.
pub fn align_to_day_boundary(series: &CarbonSeries) -> Result<CarbonSeries, SeriesError> {
    if series.resolution() != Resolution::Hourly {
        return Err(SeriesError::NotHourly);
    }
    let phase = series.resolution().phase_of(series.start());
    let lead = (24 - phase) % 24;
    if series.len() < lead + 24 {
        return Err(SeriesError::TooShort);
    }
    let whole = (series.len() - lead) / 24 * 24;
    slice(series, Window::new(lead, whole))
}
