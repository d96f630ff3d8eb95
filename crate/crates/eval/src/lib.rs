//! Batch evaluation: rolling-origin forecasting, extended horizons,
//! interval coverage and imputation sweeps over real or synthetic grids.

pub mod degradation;
mod error;
pub mod forecast;
pub mod imputation;
pub mod report;
pub mod source;
pub mod spec;
pub mod synthetic;

use gridcast_core::backends::BackendRegistry;
use gridcast_core::metrics::Protocol;

pub use degradation::{degradation_table, DegradationTable};
pub use error::EvalError;
pub use forecast::{run_forecast_protocol, GridFailure, ProtocolRun};
pub use imputation::run_imputation_protocol;
pub use report::{emit_report, ReportFormat};
pub use source::{InMemorySource, SeriesSource};
pub use spec::{ProtocolSpec, TestRange};

/// Dispatches on `spec.protocol`.
pub fn run_protocol(
    spec: &ProtocolSpec,
    source: &dyn SeriesSource,
    registry: &BackendRegistry,
) -> Result<ProtocolRun, EvalError> {
    match spec.protocol {
        Protocol::Imputation => run_imputation_protocol(spec, source, registry),
        Protocol::Forecast4d | Protocol::ForecastExtended | Protocol::Uncertainty => {
            run_forecast_protocol(spec, source, registry)
        }
    }
}
