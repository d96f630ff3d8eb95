//! Masking sweeps: hide seeded patches of a fully observed segment, fill
//! them with each method and score the normalised RMSE on the hidden part.

use chrono::NaiveDate;
use gridcast_core::backends::{self, BackendRegistry};
use gridcast_core::imputation::{generate_mask, score_imputation, MaskPlan};
use gridcast_core::metrics::{ConfigSnapshot, EvalReport, Protocol};
use gridcast_core::series::{day_start, CarbonSeries, MaskedSeries, Window};

use crate::error::EvalError;
use crate::forecast::{grids_of, per_grid, GridFailure, ProtocolRun};
use crate::source::{InMemorySource, Layered, SeriesSource};
use crate::spec::ProtocolSpec;

/// Seed used for the `index`-th mask fraction of a run.
pub fn fraction_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// The evaluated segment: the test range of the series.
fn segment(spec: &ProtocolSpec, series: &CarbonSeries) -> Result<CarbonSeries, EvalError> {
    let n = series.len();
    let (from, to) = match (spec.test.start, spec.test.end) {
        (None, None) => {
            let len = ((spec.test.fraction * n as f64).ceil() as usize).clamp(1, n.max(1));
            (n.saturating_sub(len), n)
        }
        (start, end) => {
            // Index of the first hour on or after the start of `d`, clamped.
            let idx = |d: NaiveDate| {
                let steps = (day_start(d) - series.start()).num_minutes()
                    / i64::from(series.resolution().step_minutes());
                steps.clamp(0, n as i64) as usize
            };
            let from = start.map_or(0, idx);
            let to = end.map_or(n, |e| idx(e.succ_opt().expect("date in range")));
            (from, to.max(from))
        }
    };
    if to <= from {
        return Err(EvalError::InsufficientHistory {
            grid: series.grid_id().to_string(),
            needed: 1,
            available: 0,
        });
    }
    let seg = series
        .slice(Window::new(from, to - from))
        .map_err(|e| EvalError::Source(e.to_string()))?;
    if !seg.is_complete() {
        return Err(EvalError::IncompleteTruth(series.grid_id().to_string()));
    }
    Ok(seg)
}

/// One report per grid, mask fraction and method, in that nesting order.
pub fn run_imputation_protocol(
    spec: &ProtocolSpec,
    source: &dyn SeriesSource,
    registry: &BackendRegistry,
) -> Result<ProtocolRun, EvalError> {
    spec.validate()?;
    let methods = spec
        .methods
        .iter()
        .map(|m| registry.resolve(m))
        .collect::<Result<Vec<_>, _>>()?;
    let source = Layered {
        base: source,
        overlay: spec
            .synthetic
            .iter()
            .map(|g| g.generate())
            .collect::<InMemorySource>(),
    };
    let grids = grids_of(spec, &source);
    let results = per_grid(&grids, |grid| -> Result<Vec<EvalReport>, EvalError> {
        let truth = segment(spec, &source.load(grid)?)?;
        let patch = spec
            .patch_length
            .unwrap_or_else(|| MaskPlan::default_patch_length(truth.resolution()));
        let mut reports = Vec::new();
        for (i, &fraction) in spec.mask_fractions.iter().enumerate() {
            let plan = MaskPlan::new(fraction, patch, fraction_seed(spec.seed, i));
            let generated = generate_mask(truth.len(), &plan)?;
            let masked = MaskedSeries::from_mask(&truth, generated.mask)
                .expect("mask matches the fully observed segment");
            for backend in &methods {
                let estimate = backends::impute(backend.as_ref(), &masked)?;
                let nrmse = score_imputation(&truth, &masked, &estimate)?;
                let mut r = EvalReport::empty(
                    grid,
                    Protocol::Imputation,
                    ConfigSnapshot {
                        backend: backend.descriptor().name.clone(),
                        mask_fraction: Some(fraction),
                        patch_length: Some(patch),
                        seed: Some(plan.seed),
                        ..Default::default()
                    },
                );
                r.nrmse = Some(nrmse);
                reports.push(r);
            }
        }
        Ok(reports)
    });
    let mut run = ProtocolRun::default();
    for (grid, result) in grids.iter().zip(results) {
        match result {
            Ok(reports) => run.reports.extend(reports),
            Err(e) => run.failures.push(GridFailure {
                grid_id: grid.clone(),
                lookback_days: None,
                error: e.to_string(),
            }),
        }
    }
    Ok(run)
}
