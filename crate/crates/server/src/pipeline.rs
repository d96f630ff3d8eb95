//! Daily issuance: fold newly observed truth into the residual ledger,
//! then forecast, calibrate and store the next 96 hours for every grid.

use chrono::NaiveDate;
use gridcast_core::conformal::MAX_HORIZON_HOURS;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::service::{shift, Service};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedGrid {
    pub grid_id: String,
    pub backend: String,
    /// Residuals (re)recorded from earlier issuances.
    pub residuals_recorded: usize,
    /// Lookback steps filled by the imputer.
    pub imputed_steps: usize,
    /// Horizon days whose interval came from enough residuals.
    pub calibrated_days: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuanceFailure {
    pub grid_id: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuanceSummary {
    pub day: NaiveDate,
    pub issued: Vec<IssuedGrid>,
    pub failures: Vec<IssuanceFailure>,
}

impl Service {
    /// Issues forecasts whose first hour is `day 00:00` for every catalog
    /// grid. Grids run in parallel and fail independently. Re-running with
    /// the same stored inputs rewrites identical files.
    pub fn issue_daily_forecasts(&self, day: NaiveDate) -> IssuanceSummary {
        let ids: Vec<String> = self.store().catalog().ids().map(str::to_string).collect();
        let results: Vec<Result<IssuedGrid, ApiError>> = std::thread::scope(|s| {
            let handles: Vec<_> = ids
                .iter()
                .map(|g| s.spawn(move || self.issue_for_grid(g, day)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(ApiError::Internal("issuance panicked".into())))
                })
                .collect()
        });
        let mut summary = IssuanceSummary {
            day,
            issued: Vec::new(),
            failures: Vec::new(),
        };
        for (grid_id, r) in ids.into_iter().zip(results) {
            match r {
                Ok(g) => summary.issued.push(g),
                Err(e) => {
                    log::warn!("issuance for `{grid_id}` on {day} failed: {e}");
                    summary.failures.push(IssuanceFailure {
                        grid_id,
                        code: e.code().to_string(),
                        message: e.to_string(),
                    });
                }
            }
        }
        summary
    }

    pub fn issue_for_grid(&self, grid_id: &str, day: NaiveDate) -> Result<IssuedGrid, ApiError> {
        let lock = self.issuance_lock(grid_id);
        let _guard = lock.lock().expect("issuance lock poisoned");
        let store = self.store();
        store.grid(grid_id)?;

        // Earlier issuances still inside their horizon: only truth before
        // `day` is used, so re-running a past day sees the same inputs.
        let mut ledger = self.ledger_for(grid_id)?;
        let cutoff = Service::truth_cutoff(day);
        let mut recorded = 0;
        for back in 1..=Service::blocks(MAX_HORIZON_HOURS) as i64 {
            let Some(past) = store.load_forecast(grid_id, shift(day, -back))? else {
                continue;
            };
            if past.start >= cutoff {
                continue;
            }
            let truth = store.load_range(grid_id, past.start, cutoff)?;
            recorded += ledger
                .record_outcome(&past, &truth)
                .map_err(|e| ApiError::Internal(e.to_string()))?;
        }
        store.store_ledger(&ledger)?;

        let (record, imputed) = self.compute_forecast(grid_id, day, &ledger)?;
        store.store_forecast(&record)?;
        let calibrated_days = record
            .interval
            .as_ref()
            .map_or(0, |iv| iv.calibrated.iter().filter(|c| **c).count());
        Ok(IssuedGrid {
            grid_id: grid_id.to_string(),
            backend: record.backend.name.clone(),
            residuals_recorded: recorded,
            imputed_steps: imputed,
            calibrated_days,
        })
    }
}
