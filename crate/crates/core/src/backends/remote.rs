//! Client for remote inference endpoints.
//!
//! Wire protocol: `POST <endpoint>` with a JSON body of either
//! `{grid_id, resolution, lookback, horizon_hours}` (forecast) or
//! `{grid_id, resolution, lookback, mask}` (impute); the response is
//! `{values: [...]}`. Values are passed back as decoded, without any
//! transformation here.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use super::{Backend, BackendDescriptor, BackendError, ForecastRequest};
use crate::series::{MaskedSeries, Resolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireForecastRequest {
    pub grid_id: String,
    pub resolution: Resolution,
    pub lookback: Vec<f64>,
    pub horizon_hours: usize,
}

/// Masked positions carry `0.0` in `lookback`; the mask is authoritative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImputeRequest {
    pub grid_id: String,
    pub resolution: Resolution,
    pub lookback: Vec<f64>,
    pub mask: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub values: Vec<f64>,
}

impl WireForecastRequest {
    pub fn from_request(req: &ForecastRequest) -> Result<Self, BackendError> {
        Ok(Self {
            grid_id: req.grid_id.clone(),
            resolution: req.lookback.resolution(),
            lookback: req
                .lookback
                .dense_values()
                .ok_or(BackendError::MissingInLookback)?,
            horizon_hours: req.horizon_hours,
        })
    }
}

impl WireImputeRequest {
    pub fn from_masked(masked: &MaskedSeries) -> Self {
        let series = masked.series();
        Self {
            grid_id: series.grid_id().to_string(),
            resolution: series.resolution(),
            lookback: series.values().iter().map(|v| v.unwrap_or(0.0)).collect(),
            mask: masked.mask_bits(),
        }
    }
}

pub struct RemoteBackend {
    descriptor: BackendDescriptor,
    endpoint: Url,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("descriptor", &self.descriptor)
            .field("endpoint", &self.endpoint.as_str())
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(descriptor: BackendDescriptor, endpoint: Url, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            descriptor,
            endpoint,
            agent,
        }
    }

    pub fn endpoint(&self) -> &Url {
        &self.endpoint
    }

    fn post<T: Serialize>(&self, body: &T) -> Result<WireResponse, BackendError> {
        let unavailable = |e: &dyn std::fmt::Display| {
            BackendError::BackendUnavailable(format!("{}: {e}", self.endpoint))
        };
        let mut resp = self
            .agent
            .post(self.endpoint.as_str())
            .send_json(body)
            .map_err(|e| unavailable(&e))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(unavailable(&status));
        }
        if !status.is_success() {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::InvalidResponse(format!("{status}: {text}")));
        }
        resp.body_mut()
            .read_json::<WireResponse>()
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))
    }
}

impl Backend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn predict(&self, req: &ForecastRequest) -> Result<Vec<f64>, BackendError> {
        let body = WireForecastRequest::from_request(req)?;
        Ok(self.post(&body)?.values)
    }

    fn fill(&self, masked: &MaskedSeries) -> Result<Vec<f64>, BackendError> {
        Ok(self.post(&WireImputeRequest::from_masked(masked))?.values)
    }
}
