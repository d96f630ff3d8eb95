//! Rolling-origin forecast evaluation.
//!
//! Each issue day `d` forecasts `[d 00:00, d + H)` from the lookback ending
//! at `d - 1 23:00`, after filling lookback gaps. Intervals come from a
//! ledger that is fed every issuance's residuals; the ledger's availability
//! lag keeps each calibration restricted to truth observed before `d`.

use chrono::{Days, NaiveDate};
use gridcast_core::backends::{self, Backend, BackendRegistry, ForecastRequest};
use gridcast_core::conformal::{self, ResidualLedger, HOURS_PER_DAY, MAX_HORIZON_HOURS};
use gridcast_core::metrics::{self, ConfigSnapshot, EvalReport, MetricsError, EPSILON};
use gridcast_core::series::{
    align_to_day_boundary, missing_mask, CarbonSeries, Resolution, SeriesError, Window,
};
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::source::{InMemorySource, Layered, SeriesSource};
use crate::spec::ProtocolSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFailure {
    pub grid_id: String,
    pub lookback_days: Option<usize>,
    pub error: String,
}

/// Reports for every grid (and lookback) that could be evaluated, plus
/// the ones that could not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub reports: Vec<EvalReport>,
    pub failures: Vec<GridFailure>,
}

/// Issue-day ranges for one grid and lookback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    /// First issuance; earlier days only exist as lookback.
    pub first_issue: NaiveDate,
    /// First issuance scored for MAPE.
    pub test_start: NaiveDate,
    /// First issuance scored for coverage and width. Later than
    /// `test_start` only when the warm-up had to be carved from the test
    /// range.
    pub interval_start: NaiveDate,
    pub last_issue: NaiveDate,
}

fn add_days(d: NaiveDate, n: usize) -> NaiveDate {
    d.checked_add_days(Days::new(n as u64))
        .expect("date in range")
}

fn sub_days(d: NaiveDate, n: usize) -> Option<NaiveDate> {
    d.checked_sub_days(Days::new(n as u64))
}

fn days_between(a: NaiveDate, b: NaiveDate) -> usize {
    (b - a).num_days().max(0) as usize
}

/// Works out which days to issue on for a day-aligned series starting on
/// `first_day` with `n_days` whole days.
pub fn schedule(
    spec: &ProtocolSpec,
    grid_id: &str,
    first_day: NaiveDate,
    n_days: usize,
    lookback_days: usize,
) -> Result<Schedule, EvalError> {
    let h = spec.horizon_days;
    let insufficient = || EvalError::InsufficientHistory {
        grid: grid_id.to_string(),
        needed: lookback_days + h,
        available: n_days,
    };
    if n_days < lookback_days + h {
        return Err(insufficient());
    }
    let last_day = add_days(first_day, n_days - 1);
    let earliest = add_days(first_day, lookback_days);
    // The whole forecast window must lie inside the data.
    let latest = add_days(first_day, n_days - h);
    let start = spec.test.start.unwrap_or_else(|| {
        let test_days = ((spec.test.fraction * n_days as f64).ceil() as usize).clamp(1, n_days);
        add_days(last_day, 1) - Days::new(test_days as u64)
    });
    let test_start = start.max(earliest);
    let last_issue = spec.test.end.map_or(latest, |e| e.min(latest));
    if last_issue < test_start {
        return Err(insufficient());
    }
    let warmup = spec.warmup_days();
    let wanted = sub_days(test_start, warmup).unwrap_or(earliest);
    let first_issue = wanted.max(earliest);
    let interval_start = test_start.max(add_days(first_issue, warmup));
    Ok(Schedule {
        first_issue,
        test_start,
        interval_start,
        last_issue,
    })
}

fn with_synthetic<'a>(spec: &ProtocolSpec, source: &'a dyn SeriesSource) -> Layered<'a> {
    Layered {
        base: source,
        overlay: spec
            .synthetic
            .iter()
            .map(|g| g.generate())
            .collect::<InMemorySource>(),
    }
}

pub(crate) fn grids_of(spec: &ProtocolSpec, source: &dyn SeriesSource) -> Vec<String> {
    if spec.grids.is_empty() {
        source.grid_ids()
    } else {
        spec.grids.clone()
    }
}

/// Runs `f` for every grid on its own thread, keeping input order.
pub(crate) fn per_grid<T: Send>(grids: &[String], f: impl Fn(&str) -> T + Sync) -> Vec<T> {
    std::thread::scope(|s| {
        let handles: Vec<_> = grids.iter().map(|g| s.spawn(|| f(g))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("grid evaluation panicked"))
            .collect()
    })
}

/// Rolling-origin run over every grid and lookback of `spec`.
pub fn run_forecast_protocol(
    spec: &ProtocolSpec,
    source: &dyn SeriesSource,
    registry: &BackendRegistry,
) -> Result<ProtocolRun, EvalError> {
    spec.validate()?;
    let backend = registry.resolve(&spec.backend)?;
    let imputer = registry.resolve(&spec.imputer)?;
    let source = with_synthetic(spec, source);
    let grids = grids_of(spec, &source);
    let results = per_grid(&grids, |grid| {
        let series = source.load(grid)?;
        Ok::<_, EvalError>(
            spec.lookback_days
                .iter()
                .map(|&l| {
                    evaluate_grid(spec, &series, l, backend.as_ref(), imputer.as_ref())
                        .map_err(|e| (l, e))
                })
                .collect::<Vec<_>>(),
        )
    });
    let mut run = ProtocolRun::default();
    for (grid, result) in grids.iter().zip(results) {
        match result {
            Err(e) => run.failures.push(GridFailure {
                grid_id: grid.clone(),
                lookback_days: None,
                error: e.to_string(),
            }),
            Ok(per_lookback) => {
                for r in per_lookback {
                    match r {
                        Ok(report) => run.reports.push(report),
                        Err((l, e)) => {
                            log::warn!("grid `{grid}` with {l}-day lookback: {e}");
                            run.failures.push(GridFailure {
                                grid_id: grid.clone(),
                                lookback_days: Some(l),
                                error: e.to_string(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(run)
}

#[derive(Default)]
struct Accumulator {
    issuances: Vec<(Vec<f64>, Vec<f64>)>,
    day_mapes: Vec<Vec<f64>>,
    /// Per horizon-day block: (actual, lower, upper).
    blocks: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    excluded: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One grid, one lookback: issue daily, calibrate, score.
pub fn evaluate_grid(
    spec: &ProtocolSpec,
    series: &CarbonSeries,
    lookback_days: usize,
    backend: &dyn Backend,
    imputer: &dyn Backend,
) -> Result<EvalReport, EvalError> {
    let grid = series.grid_id();
    if series.resolution() != Resolution::Hourly {
        return Err(EvalError::Source(format!(
            "grid `{grid}`: forecasting needs hourly data"
        )));
    }
    let aligned = align_to_day_boundary(series).map_err(|e| match e {
        SeriesError::TooShort => EvalError::InsufficientHistory {
            grid: grid.to_string(),
            needed: lookback_days + spec.horizon_days,
            available: 0,
        },
        other => EvalError::Source(other.to_string()),
    })?;
    let first_day = aligned.start().date_naive();
    let n_days = aligned.len() / HOURS_PER_DAY;
    let sched = schedule(spec, grid, first_day, n_days, lookback_days)?;
    if sched.interval_start > sched.test_start {
        log::info!(
            "grid `{grid}`: warm-up carved from the test range; intervals scored from {}",
            sched.interval_start
        );
    }

    let cfg = spec.conformal();
    let horizon_hours = spec.horizon_days * HOURS_PER_DAY;
    let with_intervals = horizon_hours <= MAX_HORIZON_HOURS;
    let mut ledger = ResidualLedger::with_lag(grid, cfg.window_days, cfg.lag);
    let mut acc = Accumulator {
        day_mapes: vec![Vec::new(); spec.horizon_days],
        blocks: vec![Default::default(); spec.horizon_days.min(4)],
        ..Default::default()
    };
    let mut n_issuances = 0;
    let mut day = sched.first_issue;
    while day <= sched.last_issue {
        let offset = days_between(first_day, day) * HOURS_PER_DAY;
        let lookback = aligned
            .slice(Window::new(
                offset - lookback_days * HOURS_PER_DAY,
                lookback_days * HOURS_PER_DAY,
            ))
            .expect("schedule keeps lookbacks in range");
        let lookback = if lookback.is_complete() {
            lookback
        } else {
            match backends::impute(imputer, &missing_mask(&lookback)) {
                Ok(filled) => filled,
                Err(e) => {
                    log::warn!(
                        "grid `{grid}` {day}: lookback imputation failed ({e}); day skipped"
                    );
                    day = add_days(day, 1);
                    continue;
                }
            }
        };
        let record = backends::forecast(
            backend,
            &ForecastRequest::new(lookback.clone(), horizon_hours),
        )?;
        debug_assert!(
            lookback.end() <= record.start,
            "lookback overlaps the forecast window"
        );
        let actual = aligned
            .slice(Window::new(offset, horizon_hours))
            .expect("schedule keeps horizons in range");
        let interval = with_intervals.then(|| conformal::calibrate(&ledger, &record, &cfg));
        ledger
            .record_outcome(&record, &actual)
            .expect("record and actuals share grid and resolution");

        if day >= sched.test_start {
            n_issuances += 1;
            score(
                &mut acc,
                &record.horizon,
                &actual,
                interval.as_ref(),
                day >= sched.interval_start,
            );
        }
        day = add_days(day, 1);
    }

    let mut report = EvalReport::empty(
        grid,
        spec.protocol,
        ConfigSnapshot {
            backend: backend.descriptor().name.clone(),
            lookback_hours: Some(lookback_days * HOURS_PER_DAY),
            horizon_hours: Some(horizon_hours),
            alpha: Some(spec.alpha),
            window_days: Some(spec.window_days),
            seed: Some(spec.seed),
            ..Default::default()
        },
    );
    report.n_issuances = n_issuances;
    report.excluded_hours = acc.excluded;
    match metrics::window_mapes(&acc.issuances) {
        Ok(w) => {
            report.mean_mape = Some(w.mean);
            report.p90_mape = Some(w.p90);
            report.p90_mape_hourly = Some(w.p90_hourly);
        }
        Err(MetricsError::Empty) => {}
        Err(e) => return Err(EvalError::Source(e.to_string())),
    }
    report.mape_by_day = acc.day_mapes.iter().map(|v| mean(v)).collect();
    if with_intervals {
        let (mut ys, mut ls, mut us) = (Vec::new(), Vec::new(), Vec::new());
        report.coverage_by_day = acc
            .blocks
            .iter()
            .map(|(y, l, u)| {
                ys.extend_from_slice(y);
                ls.extend_from_slice(l);
                us.extend_from_slice(u);
                (!y.is_empty()).then(|| metrics::coverage(y, l, u).expect("aligned"))
            })
            .collect();
        if !ys.is_empty() {
            report.coverage_overall = Some(metrics::coverage(&ys, &ls, &us).expect("aligned"));
            report.mean_niw = metrics::niw(&ys, &ls, &us).ok();
        }
    }
    Ok(report)
}

fn score(
    acc: &mut Accumulator,
    forecast: &[f64],
    actual: &CarbonSeries,
    interval: Option<&conformal::IntervalSet>,
    score_intervals: bool,
) {
    let (mut ys, mut fs) = (Vec::new(), Vec::new());
    for (k, day_mapes) in acc.day_mapes.iter_mut().enumerate() {
        let (mut dy, mut df) = (Vec::new(), Vec::new());
        let hours = k * HOURS_PER_DAY..(k + 1) * HOURS_PER_DAY;
        for (y, f) in actual.values()[hours.clone()].iter().zip(&forecast[hours]) {
            if let Some(y) = y {
                dy.push(*y);
                df.push(*f);
            }
        }
        if let Ok(m) = metrics::mape(&dy, &df) {
            day_mapes.push(m);
        }
        ys.extend(dy);
        fs.extend(df);
    }
    acc.excluded += ys.iter().filter(|y| **y < EPSILON).count();
    if let (Some(iv), true) = (interval, score_intervals) {
        for (i, y) in actual.values().iter().enumerate().take(iv.len()) {
            let (Some(y), Some(block)) = (y, acc.blocks.get_mut(i / HOURS_PER_DAY)) else {
                continue;
            };
            block.0.push(*y);
            block.1.push(iv.lower[i]);
            block.2.push(iv.upper[i]);
        }
    }
    if !ys.is_empty() {
        acc.issuances.push((ys, fs));
    }
}
