use std::path::Path;

use chrono::NaiveDate;
use gridcast_core::conformal::{AvailabilityLag, ConformalConfig, CoverageTarget};
use gridcast_core::metrics::Protocol;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::synthetic::SyntheticGrid;

/// Lookbacks the extended-horizon sweep is defined for, in days.
pub const LOOKBACK_DAYS: [usize; 6] = [1, 2, 4, 7, 15, 30];
pub const MAX_HORIZON_DAYS: usize = 21;
pub const MASK_FRACTIONS: [f64; 6] = [0.125, 0.25, 0.375, 0.5, 0.625, 0.75];

/// Which days are scored. Explicit dates win over `fraction`, which takes
/// the last share of whole days in each grid's series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRange {
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    #[serde(default = "TestRange::default_fraction")]
    pub fraction: f64,
}

impl TestRange {
    fn default_fraction() -> f64 {
        0.3
    }

    pub fn dates(start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            start: Some(start),
            end: Some(end),
            fraction: Self::default_fraction(),
        }
    }
}

impl Default for TestRange {
    fn default() -> Self {
        Self {
            start: None,
            end: None,
            fraction: Self::default_fraction(),
        }
    }
}

fn default_backend() -> String {
    "seasonal-naive".into()
}
fn default_imputer() -> String {
    "linear".into()
}
fn default_lookbacks() -> Vec<usize> {
    vec![7]
}
fn default_horizon() -> usize {
    4
}
fn default_alpha() -> f64 {
    0.95
}
fn default_window() -> usize {
    75
}
fn default_min_days() -> usize {
    10
}
fn default_fallback() -> f64 {
    0.5
}
fn default_fractions() -> Vec<f64> {
    MASK_FRACTIONS.to_vec()
}
fn default_methods() -> Vec<String> {
    vec!["naive".into(), "linear".into(), "cubic-spline".into()]
}

/// One batch evaluation, loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub protocol: Protocol,
    /// Empty means every grid the data source knows.
    #[serde(default)]
    pub grids: Vec<String>,
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Fills lookback gaps before forecasting.
    #[serde(default = "default_imputer")]
    pub imputer: String,
    #[serde(default = "default_lookbacks")]
    pub lookback_days: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon_days: usize,
    #[serde(default)]
    pub test: TestRange,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_window")]
    pub window_days: usize,
    #[serde(default = "default_min_days")]
    pub min_days: usize,
    #[serde(default = "default_fallback")]
    pub fallback_width: f64,
    #[serde(default = "default_fractions")]
    pub mask_fractions: Vec<f64>,
    /// Defaults to 4 steps for hourly and 12 for 5-minute data.
    #[serde(default)]
    pub patch_length: Option<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    /// Generated grids added to the data source.
    #[serde(default)]
    pub synthetic: Vec<SyntheticGrid>,
}

impl ProtocolSpec {
    pub fn new(protocol: Protocol) -> Self {
        Self {
            protocol,
            grids: Vec::new(),
            backend: default_backend(),
            imputer: default_imputer(),
            lookback_days: default_lookbacks(),
            horizon_days: if protocol == Protocol::ForecastExtended {
                MAX_HORIZON_DAYS
            } else {
                default_horizon()
            },
            test: TestRange::default(),
            alpha: default_alpha(),
            window_days: default_window(),
            min_days: default_min_days(),
            fallback_width: default_fallback(),
            mask_fractions: default_fractions(),
            patch_length: None,
            methods: default_methods(),
            seed: 0,
            synthetic: Vec::new(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::InvalidSpec(format!("{}: {e}", path.display())))?;
        let spec: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| EvalError::InvalidSpec(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text)
                .map_err(|e| EvalError::InvalidSpec(format!("{}: {e}", path.display())))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidSpec(m));
        if self.lookback_days.is_empty() {
            return bad("lookback_days is empty".into());
        }
        if let Some(l) = self
            .lookback_days
            .iter()
            .find(|l| !LOOKBACK_DAYS.contains(l))
        {
            return bad(format!(
                "lookback of {l} days is not one of {LOOKBACK_DAYS:?}"
            ));
        }
        if !(1..=MAX_HORIZON_DAYS).contains(&self.horizon_days) {
            return bad(format!("horizon_days must be in 1..={MAX_HORIZON_DAYS}"));
        }
        if CoverageTarget::new(self.alpha).is_err() {
            return bad(format!("alpha {} is not in (0, 1)", self.alpha));
        }
        if self.window_days == 0 {
            return bad("window_days must be positive".into());
        }
        if let Some(f) = self
            .mask_fractions
            .iter()
            .find(|f| !(**f > 0.0 && **f < 1.0))
        {
            return bad(format!("mask fraction {f} is not in (0, 1)"));
        }
        if self.patch_length == Some(0) {
            return bad("patch_length must be positive".into());
        }
        if !(self.test.fraction > 0.0 && self.test.fraction <= 1.0) {
            return bad("test.fraction must be in (0, 1]".into());
        }
        if let (Some(s), Some(e)) = (self.test.start, self.test.end) {
            if e < s {
                return bad("test.end precedes test.start".into());
            }
        }
        Ok(())
    }

    pub fn conformal(&self) -> ConformalConfig {
        ConformalConfig {
            target: CoverageTarget::new(self.alpha).expect("validated"),
            window_days: self.window_days,
            min_days: self.min_days,
            fallback_width: self.fallback_width,
            lag: AvailabilityLag::default(),
        }
    }

    /// Days of issuance used only to populate the residual ledger.
    pub fn warmup_days(&self) -> usize {
        self.window_days.max(self.min_days) + 3
    }
}
