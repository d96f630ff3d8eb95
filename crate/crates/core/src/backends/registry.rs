use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use thiserror::Error;
use url::Url;

use super::{
    Backend, BackendDescriptor, Capability, Ewma, Mode, NativeImputer, RemoteBackend,
    SeasonalNaive, DEFAULT_REMOTE_TIMEOUT_SECS,
};
use crate::imputation::ImputeMethod;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("backend `{0}` is already registered")]
    DuplicateName(String),
    #[error("invalid endpoint for `{name}`: {reason}")]
    InvalidEndpoint { name: String, reason: String },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("mode {mode} is not valid for `{name}`")]
    InvalidMode { name: String, mode: Mode },
    #[error("backend `{name}` does not support {capability}")]
    MissingCapability {
        name: String,
        capability: Capability,
    },
}

struct State {
    backends: BTreeMap<String, Arc<dyn Backend>>,
    default_forecaster: Option<String>,
    default_imputer: Option<String>,
}

/// Name-addressed set of backends with a default forecaster and imputer.
/// Lookups take a shared lock; registration and default changes are rare.
pub struct BackendRegistry {
    state: RwLock<State>,
    timeout: Duration,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self {
            state: RwLock::new(State {
                backends: BTreeMap::new(),
                default_forecaster: None,
                default_imputer: None,
            }),
            timeout: Duration::from_secs(DEFAULT_REMOTE_TIMEOUT_SECS),
        }
    }

    /// Registry holding `ewma`, `seasonal-naive`, `naive`, `linear` and
    /// `cubic-spline`, with seasonal-naive and linear as defaults.
    pub fn with_native_baselines() -> Self {
        let reg = Self::new();
        let natives: Vec<Arc<dyn Backend>> = vec![
            Arc::new(Ewma::default()),
            Arc::new(SeasonalNaive::new()),
            Arc::new(NativeImputer::new(ImputeMethod::Naive)),
            Arc::new(NativeImputer::new(ImputeMethod::Linear)),
            Arc::new(NativeImputer::new(ImputeMethod::CubicSpline)),
        ];
        for b in natives {
            reg.insert(b).expect("native names are distinct");
        }
        reg.set_default_forecaster("seasonal-naive")
            .expect("registered above");
        reg.set_default_imputer("linear").expect("registered above");
        reg
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Adds an already constructed backend.
    pub fn insert(&self, backend: Arc<dyn Backend>) -> Result<(), RegistryError> {
        let name = backend.descriptor().name.clone();
        let mut st = self.state.write().expect("registry lock poisoned");
        if st.backends.contains_key(&name) {
            return Err(RegistryError::DuplicateName(name));
        }
        st.backends.insert(name, backend);
        Ok(())
    }

    /// Registers a remote backend at `endpoint`. Native baselines cannot be
    /// registered this way and have no fine-tuned mode.
    pub fn register_backend(
        &self,
        descriptor: BackendDescriptor,
        endpoint: Option<&str>,
    ) -> Result<Arc<dyn Backend>, RegistryError> {
        let name = descriptor.name.clone();
        if self.get(&name).is_some() {
            return Err(RegistryError::DuplicateName(name));
        }
        let endpoint = endpoint.ok_or_else(|| RegistryError::InvalidEndpoint {
            name: name.clone(),
            reason: "remote backends need an endpoint URL".into(),
        })?;
        let url = Url::parse(endpoint).map_err(|e| RegistryError::InvalidEndpoint {
            name: name.clone(),
            reason: e.to_string(),
        })?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(RegistryError::InvalidEndpoint {
                name,
                reason: format!("unsupported scheme `{}`", url.scheme()),
            });
        }
        let backend: Arc<dyn Backend> = Arc::new(RemoteBackend::new(descriptor, url, self.timeout));
        self.insert(backend.clone())?;
        Ok(backend)
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Backend>> {
        self.state
            .read()
            .expect("registry lock poisoned")
            .backends
            .get(name)
            .cloned()
    }

    pub fn resolve(&self, name: &str) -> Result<Arc<dyn Backend>, RegistryError> {
        self.get(name)
            .ok_or_else(|| RegistryError::UnknownModel(name.to_string()))
    }

    pub fn descriptors(&self) -> Vec<BackendDescriptor> {
        self.state
            .read()
            .expect("registry lock poisoned")
            .backends
            .values()
            .map(|b| b.descriptor().clone())
            .collect()
    }

    fn set_default(&self, name: &str, capability: Capability) -> Result<(), RegistryError> {
        let backend = self.resolve(name)?;
        if !backend.descriptor().supports(capability) {
            return Err(RegistryError::MissingCapability {
                name: name.to_string(),
                capability,
            });
        }
        let mut st = self.state.write().expect("registry lock poisoned");
        match capability {
            Capability::Forecast => st.default_forecaster = Some(name.to_string()),
            Capability::Impute => st.default_imputer = Some(name.to_string()),
        }
        Ok(())
    }

    pub fn set_default_forecaster(&self, name: &str) -> Result<(), RegistryError> {
        self.set_default(name, Capability::Forecast)
    }

    pub fn set_default_imputer(&self, name: &str) -> Result<(), RegistryError> {
        self.set_default(name, Capability::Impute)
    }

    /// Selects `name` as default for every capability it has, after checking
    /// that `mode` matches the backend.
    pub fn set_model(&self, name: &str, mode: Mode) -> Result<BackendDescriptor, RegistryError> {
        let backend = self.resolve(name)?;
        let desc = backend.descriptor().clone();
        if desc.mode != mode {
            return Err(RegistryError::InvalidMode {
                name: name.to_string(),
                mode,
            });
        }
        if desc.supports(Capability::Forecast) {
            self.set_default_forecaster(name)?;
        }
        if desc.supports(Capability::Impute) {
            self.set_default_imputer(name)?;
        }
        Ok(desc)
    }

    pub fn default_forecaster(&self) -> Option<Arc<dyn Backend>> {
        let name = self
            .state
            .read()
            .expect("registry lock poisoned")
            .default_forecaster
            .clone()?;
        self.get(&name)
    }

    pub fn default_imputer(&self) -> Option<Arc<dyn Backend>> {
        let name = self
            .state
            .read()
            .expect("registry lock poisoned")
            .default_imputer
            .clone()?;
        self.get(&name)
    }
}
