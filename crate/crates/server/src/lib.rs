//! Serving layer: configuration, the daily issuance pipeline, the HTTP API
//! and the operations behind the `gridcast` command.

pub mod api;
pub mod config;
mod error;
pub mod pipeline;
pub mod service;

pub use config::{RemoteConfig, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use pipeline::{IssuanceFailure, IssuanceSummary, IssuedGrid};
pub use service::{ImputeRequest, OpenError, Service};
