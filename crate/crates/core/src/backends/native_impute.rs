use super::{Backend, BackendDescriptor, BackendError, Capability, Mode};
use crate::imputation::{self, ImputeMethod};
use crate::series::MaskedSeries;

/// Exposes an interpolating imputer through the backend interface.
#[derive(Debug, Clone)]
pub struct NativeImputer {
    method: ImputeMethod,
    descriptor: BackendDescriptor,
}

impl NativeImputer {
    pub fn new(method: ImputeMethod) -> Self {
        Self {
            method,
            descriptor: BackendDescriptor::new(
                method.name(),
                Mode::ZeroShot,
                &[Capability::Impute],
            ),
        }
    }

    pub fn method(&self) -> ImputeMethod {
        self.method
    }
}

impl Backend for NativeImputer {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn fill(&self, masked: &MaskedSeries) -> Result<Vec<f64>, BackendError> {
        let series = imputation::impute(masked, self.method).map_err(|e| match e {
            imputation::ImputeError::AllMissing => BackendError::AllMissing,
            other => BackendError::InvalidResponse(other.to_string()),
        })?;
        Ok(series
            .values()
            .iter()
            .map(|v| v.expect("imputer fills every position"))
            .collect())
    }
}
