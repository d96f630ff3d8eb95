//! File-backed persistence for the forecasting pipeline and the upstream
//! data fetcher.

pub mod catalog;
pub mod csvio;
mod error;
pub mod fetch;
mod store;

pub use catalog::{CatalogEntry, GridCatalog};
pub use error::{Result, StoreError};
pub use fetch::{
    run_fetch_cycle, DefaultTransport, FetchError, FetchJobConfig, FetchSummary, ParserRegistry,
    PayloadParser, RetryPolicy, Transport,
};
pub use store::{validate_grid_id, write_atomic, DataStore, MergeSummary};
