//! Seeded synthetic grids, so the harness can run without downloads.

use std::f64::consts::TAU;

use chrono::NaiveDate;
use gridcast_core::series::{day_start, CarbonSeries, Resolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Daily sinusoid plus linear trend plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    pub grid_id: String,
    pub start: NaiveDate,
    pub days: usize,
    #[serde(default = "PeriodicGrid::default_mean")]
    pub mean: f64,
    #[serde(default = "PeriodicGrid::default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub trend_per_day: f64,
    /// Noise standard deviation as a fraction of `mean`.
    #[serde(default)]
    pub noise_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PeriodicGrid {
    fn default_mean() -> f64 {
        400.0
    }

    fn default_amplitude() -> f64 {
        100.0
    }

    pub fn new(grid_id: impl Into<String>, start: NaiveDate, days: usize) -> Self {
        Self {
            grid_id: grid_id.into(),
            start,
            days,
            mean: Self::default_mean(),
            amplitude: Self::default_amplitude(),
            trend_per_day: 0.0,
            noise_fraction: 0.0,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, fraction: f64, seed: u64) -> Self {
        self.noise_fraction = fraction;
        self.seed = seed;
        self
    }

    pub fn with_trend(mut self, per_day: f64) -> Self {
        self.trend_per_day = per_day;
        self
    }

    /// Noise-free value at hour `t`; identical for equal hour-of-day when
    /// the trend is zero.
    pub fn clean_value(&self, t: usize) -> f64 {
        let hour = (t % 24) as f64;
        self.mean
            + self.trend_per_day * (t / 24) as f64
            + self.amplitude * (TAU * hour / 24.0).sin()
    }

    pub fn generate(&self) -> CarbonSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let sd = self.noise_fraction * self.mean;
        let noise = Normal::new(0.0, sd.max(0.0)).expect("finite standard deviation");
        let values: Vec<f64> = (0..self.days * 24)
            .map(|t| {
                let e = if sd > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                (self.clean_value(t) + e).max(0.0)
            })
            .collect();
        CarbonSeries::from_values(
            &self.grid_id,
            day_start(self.start),
            Resolution::Hourly,
            &values,
        )
        .expect("generated values are finite and non-negative")
    }
}

/// Volatile renewable-heavy grid: a two-state Markov chain between a clean
/// and a fossil level, a midday solar dip and multiplicative noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSwitchingGrid {
    pub grid_id: String,
    pub start: NaiveDate,
    pub days: usize,
    #[serde(default = "RegimeSwitchingGrid::default_low")]
    pub low: f64,
    #[serde(default = "RegimeSwitchingGrid::default_high")]
    pub high: f64,
    /// Per-hour probability of changing regime.
    #[serde(default = "RegimeSwitchingGrid::default_switch")]
    pub switch_probability: f64,
    /// Depth of the solar dip as a fraction of the current level.
    #[serde(default = "RegimeSwitchingGrid::default_dip")]
    pub solar_dip: f64,
    #[serde(default = "RegimeSwitchingGrid::default_noise")]
    pub noise_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl RegimeSwitchingGrid {
    fn default_low() -> f64 {
        80.0
    }
    fn default_high() -> f64 {
        450.0
    }
    fn default_switch() -> f64 {
        0.02
    }
    fn default_dip() -> f64 {
        0.5
    }
    fn default_noise() -> f64 {
        0.05
    }

    pub fn new(grid_id: impl Into<String>, start: NaiveDate, days: usize, seed: u64) -> Self {
        Self {
            grid_id: grid_id.into(),
            start,
            days,
            low: Self::default_low(),
            high: Self::default_high(),
            switch_probability: Self::default_switch(),
            solar_dip: Self::default_dip(),
            noise_fraction: Self::default_noise(),
            seed,
        }
    }

    pub fn generate(&self) -> CarbonSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_fraction.max(0.0)).expect("finite noise");
        let mut high = rng.random_bool(0.5);
        let values: Vec<f64> = (0..self.days * 24)
            .map(|t| {
                if rng.random_bool(self.switch_probability.clamp(0.0, 1.0)) {
                    high = !high;
                }
                let level = if high { self.high } else { self.low };
                let hour = (t % 24) as f64;
                // Solar output peaks at 12:00 and is zero at night.
                let sun = (TAU * (hour - 6.0) / 24.0).sin().max(0.0);
                let v = level * (1.0 - self.solar_dip * sun) * (1.0 + noise.sample(&mut rng));
                v.max(0.0)
            })
            .collect();
        CarbonSeries::from_values(
            &self.grid_id,
            day_start(self.start),
            Resolution::Hourly,
            &values,
        )
        .expect("generated values are finite and non-negative")
    }
}

/// A generator addressable from a protocol file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticGrid {
    Periodic(PeriodicGrid),
    RegimeSwitching(RegimeSwitchingGrid),
}

impl SyntheticGrid {
    pub fn grid_id(&self) -> &str {
        match self {
            SyntheticGrid::Periodic(g) => &g.grid_id,
            SyntheticGrid::RegimeSwitching(g) => &g.grid_id,
        }
    }

    pub fn generate(&self) -> CarbonSeries {
        match self {
            SyntheticGrid::Periodic(g) => g.generate(),
            SyntheticGrid::RegimeSwitching(g) => g.generate(),
        }
    }
}

/// Smooth truth made of a daily sinusoid and a second sinusoid whose
/// period (24 times the golden ratio, about 38.8 h) is incommensurate with
/// a day. Phases come from `seed`.
pub fn two_sinusoids(grid_id: &str, start: NaiveDate, hours: usize, seed: u64) -> CarbonSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p1, p2): (f64, f64) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let slow = 24.0 * (1.0 + 5f64.sqrt()) / 2.0;
    let values: Vec<f64> = (0..hours)
        .map(|t| {
            let t = t as f64;
            300.0 + 80.0 * (TAU * t / 24.0 + p1).sin() + 50.0 * (TAU * t / slow + p2).sin()
        })
        .collect();
    CarbonSeries::from_values(grid_id, day_start(start), Resolution::Hourly, &values)
        .expect("values stay within [170, 430]")
}
