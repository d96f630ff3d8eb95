//! Service configuration from a TOML file plus environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use gridcast_core::backends::{BackendDescriptor, BackendRegistry, Capability, Mode};
use gridcast_core::conformal::{
    AvailabilityLag, ConformalConfig, CoverageTarget, MAX_HORIZON_HOURS,
};
use gridcast_store::FetchJobConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_ENV: &str = "GRIDCAST_CONFIG";
pub const LISTEN_ENV: &str = "GRIDCAST_LISTEN";
pub const DATA_ROOT_ENV: &str = "GRIDCAST_DATA_ROOT";
pub const REMOTE_TIMEOUT_ENV: &str = "GRIDCAST_REMOTE_TIMEOUT_SECS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// A remote inference endpoint exposed as a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Registered name; `remote:` is prepended when missing.
    pub name: String,
    pub endpoint: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_capabilities")]
    pub capabilities: Vec<Capability>,
    #[serde(default)]
    pub max_horizon_hours: Option<usize>,
}

fn default_mode() -> Mode {
    Mode::ZeroShot
}

fn default_capabilities() -> Vec<Capability> {
    vec![Capability::Forecast]
}

impl RemoteConfig {
    pub fn descriptor(&self) -> BackendDescriptor {
        let name = if self.name.starts_with("remote:") {
            self.name.clone()
        } else {
            format!("remote:{}", self.name)
        };
        let d = BackendDescriptor::new(name, self.mode, &self.capabilities);
        match self.max_horizon_hours {
            Some(h) => d.with_max_horizon(h),
            None => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_root: PathBuf,
    pub default_backend: String,
    pub default_imputer: String,
    /// Nominal interval coverage.
    pub alpha: f64,
    pub window_days: usize,
    pub min_days: usize,
    pub fallback_width: f64,
    /// Extra days added to the availability lag of every horizon day.
    pub lag_offset_days: i64,
    /// History fed to the forecaster at each issuance.
    pub lookback_days: usize,
    /// Compute forecasts for requests with no stored issuance.
    pub on_demand: bool,
    pub max_horizon_hours: usize,
    /// Longest series accepted by the imputation endpoint.
    pub max_impute_len: usize,
    pub remote_timeout_secs: u64,
    pub remote: Vec<RemoteConfig>,
    pub fetch: Option<FetchJobConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let conformal = ConformalConfig::default();
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_root: PathBuf::from("gridcast-data"),
            default_backend: "seasonal-naive".into(),
            default_imputer: "linear".into(),
            alpha: conformal.target.alpha(),
            window_days: conformal.window_days,
            min_days: conformal.min_days,
            fallback_width: conformal.fallback_width,
            lag_offset_days: conformal.lag.offset,
            lookback_days: 7,
            on_demand: false,
            max_horizon_hours: MAX_HORIZON_HOURS,
            max_impute_len: 1_000_000,
            remote_timeout_secs: 30,
            remote: Vec::new(),
            fetch: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads `path`, or the file named by `GRIDCAST_CONFIG`, or falls back
    /// to defaults; then applies environment overrides and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let cfg = match path.map(Path::to_path_buf).or(from_env) {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|source| ConfigError::Read {
                    path: p.clone(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        let cfg = cfg.with_env_overrides()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_env_overrides(mut self) -> Result<Self, ConfigError> {
        if let Ok(v) = std::env::var(LISTEN_ENV) {
            self.listen = v
                .parse()
                .map_err(|e| ConfigError::Invalid(format!("{LISTEN_ENV}: {e}")))?;
        }
        if let Some(v) = std::env::var_os(DATA_ROOT_ENV) {
            self.data_root = PathBuf::from(v);
        }
        if let Ok(v) = std::env::var(REMOTE_TIMEOUT_ENV) {
            self.remote_timeout_secs = v
                .parse()
                .map_err(|e| ConfigError::Invalid(format!("{REMOTE_TIMEOUT_ENV}: {e}")))?;
        }
        if let Some(f) = self.fetch.take() {
            self.fetch = Some(
                f.with_env_overrides()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            );
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if self.max_horizon_hours == 0 || self.max_horizon_hours > MAX_HORIZON_HOURS {
            return bad(format!(
                "max_horizon_hours must be in 1..={MAX_HORIZON_HOURS}"
            ));
        }
        if self.lookback_days == 0 || self.window_days == 0 {
            return bad("lookback_days and window_days must be positive".into());
        }
        if self.fallback_width.is_nan() || self.fallback_width < 0.0 {
            return bad("fallback_width must be non-negative".into());
        }
        if self.remote_timeout_secs == 0 {
            return bad("remote_timeout_secs must be positive".into());
        }
        if let Some(f) = &self.fetch {
            f.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn conformal(&self) -> ConformalConfig {
        ConformalConfig {
            target: CoverageTarget::new(self.alpha).expect("validated alpha"),
            window_days: self.window_days,
            min_days: self.min_days,
            fallback_width: self.fallback_width,
            lag: AvailabilityLag {
                offset: self.lag_offset_days,
            },
        }
    }

    /// Native baselines plus the configured remote backends, with the
    /// configured defaults selected.
    pub fn build_registry(&self) -> Result<BackendRegistry, ConfigError> {
        let reg = BackendRegistry::with_native_baselines()
            .with_timeout(Duration::from_secs(self.remote_timeout_secs));
        for r in &self.remote {
            reg.register_backend(r.descriptor(), Some(&r.endpoint))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        reg.set_default_forecaster(&self.default_backend)
            .map_err(|e| ConfigError::Invalid(format!("default_backend: {e}")))?;
        reg.set_default_imputer(&self.default_imputer)
            .map_err(|e| ConfigError::Invalid(format!("default_imputer: {e}")))?;
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_file_with_remotes() {
        let cfg = ServiceConfig::from_toml(
            r#"
            data_root = "/tmp/x"
            alpha = 0.9
            [[remote]]
            name = "chronos"
            endpoint = "http://127.0.0.1:9000/forecast"
            mode = "ZS"
            capabilities = ["forecast", "impute"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.alpha, 0.9);
        assert_eq!(cfg.lookback_days, 7);
        assert!(!cfg.on_demand);
        let reg = cfg.build_registry().unwrap();
        let d = reg.resolve("remote:chronos").unwrap().descriptor().clone();
        assert!(d.supports(Capability::Impute));
    }

    #[test]
    fn rejects_bad_values() {
        let too_long = ServiceConfig {
            max_horizon_hours: 120,
            ..Default::default()
        };
        assert!(too_long.validate().is_err());
        assert!(ServiceConfig::from_toml("bogus = 1").is_err());
        let unknown = ServiceConfig {
            default_backend: "nope".into(),
            ..Default::default()
        };
        assert!(unknown.build_registry().is_err());
    }
}
