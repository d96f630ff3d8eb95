//! Acceptance checks A1-A9. Prints one PASS/FAIL/SKIP line per criterion
//! and exits non-zero when a required check fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::{Days, NaiveDate, TimeZone, Utc};
use gridcast_core::backends::{
    BackendDescriptor, BackendRegistry, Capability, ForecastRecord, Mode,
};
use gridcast_core::conformal::{
    self, AvailabilityLag, ConformalConfig, CoverageTarget, ResidualLedger, MAX_HORIZON_HOURS,
};
use gridcast_core::imputation::NaturalCubicSpline;
use gridcast_core::imputation::{generate_mask, impute, score_imputation, ImputeMethod, MaskPlan};
use gridcast_core::metrics::{self, MetricsError, NormStats, Protocol, EPSILON};
use gridcast_core::series::{day_start, CarbonSeries, MaskedSeries, Resolution};
use gridcast_eval::synthetic::{two_sinusoids, PeriodicGrid};
use gridcast_eval::{
    degradation_table, run_forecast_protocol, InMemorySource, ProtocolSpec, TestRange,
};
use gridcast_server::ServiceConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

fn plus(day: NaiveDate, n: u64) -> NaiveDate {
    day.checked_add_days(Days::new(n)).unwrap()
}

// ---------------------------------------------------------------- A1

fn a1_conformal_coverage() -> Check {
    let lookback = 7;
    let mut spec = ProtocolSpec::new(Protocol::Uncertainty);
    let warmup = spec.warmup_days() as u64;
    let first = d(2022, 1, 1);
    let test_start = plus(first, lookback + warmup);
    spec.lookback_days = vec![lookback as usize];
    spec.backend = "seasonal-naive".into();
    spec.alpha = 0.95;
    spec.window_days = 75;
    spec.test = TestRange::dates(test_start, plus(test_start, 239));
    let days = (lookback + warmup + 240 + 3) as usize;
    let grid = PeriodicGrid::new("SYN", first, days)
        .with_noise(0.1, 1)
        .generate();
    let source: InMemorySource = [grid].into_iter().collect();

    let started = Instant::now();
    let run = run_forecast_protocol(&spec, &source, &BackendRegistry::with_native_baselines())
        .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    ensure(run.failures.is_empty(), || format!("{:?}", run.failures))?;
    let r = &run.reports[0];
    let overall = r.coverage_overall.ok_or("no coverage")?;
    let by_day: Vec<f64> = r
        .coverage_by_day
        .iter()
        .map(|c| c.unwrap_or(f64::NAN))
        .collect();
    let min_day = by_day.iter().copied().fold(f64::INFINITY, f64::min);
    let detail = format!(
        "{} issuances, overall {overall:.2}%, by day {:.2?}, {secs:.2} s",
        r.n_issuances, by_day
    );
    ensure(r.n_issuances == 240, || {
        format!("expected 240 issuances; {detail}")
    })?;
    ensure((93.0..=97.0).contains(&overall), || detail.clone())?;
    ensure(by_day.len() == 4 && min_day >= 92.0, || detail.clone())?;
    ensure(secs < 10.0, || format!("too slow; {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- A2

/// `k`-th smallest (1-based) by counting, without sorting.
fn kth_smallest(values: &[f64], k: usize) -> f64 {
    *values
        .iter()
        .find(|&&v| {
            let below = values.iter().filter(|&&x| x < v).count();
            let at_most = values.iter().filter(|&&x| x <= v).count();
            below < k && k <= at_most
        })
        .expect("rank within 1..=m")
}

/// `ceil(num / den)` for non-negative integers.
fn ceil_div(num: usize, den: usize) -> usize {
    num.div_ceil(den)
}

/// Oracle quantiles for alpha = a / 20, from exact integer ranks.
fn oracle_quantiles(residuals: &[f64], a: usize) -> (f64, f64) {
    let m = residuals.len();
    // p_lo = (20 - a) / 40, p_hi = (20 + a) / 40.
    let rank = |num: usize| ceil_div((m + 1) * num, 40).clamp(1, m);
    (
        kth_smallest(residuals, rank(20 - a)),
        kth_smallest(residuals, rank(20 + a)),
    )
}

fn record(issue_day: NaiveDate, horizon: Vec<f64>) -> ForecastRecord {
    ForecastRecord {
        grid_id: "G".into(),
        issue_day,
        start: day_start(issue_day),
        resolution: Resolution::Hourly,
        horizon,
        backend: BackendDescriptor::new("seasonal-naive", Mode::ZeroShot, &[Capability::Forecast]),
        interval: None,
    }
}

fn a2_quantile_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let issue = d(2024, 6, 1);
    let yhat = 4096.0;
    let mut checked = 0usize;
    for case in 0..1000 {
        let a = [16usize, 18, 19][rng.random_range(0..3)];
        let alpha = a as f64 / 20.0;
        let cfg = ConformalConfig {
            target: CoverageTarget::new(alpha).unwrap(),
            min_days: 1,
            ..Default::default()
        };
        let mut ledger = ResidualLedger::new("G", cfg.window_days);
        let mut samples = vec![Vec::new(); MAX_HORIZON_HOURS];
        // Residuals are multiples of 1/1024 so yhat + q and its inverse are exact.
        let ties = rng.random_bool(0.3);
        for (h, s) in samples.iter_mut().enumerate() {
            let m = rng.random_range(1..=40usize);
            for j in 0..m {
                let r = if ties {
                    rng.random_range(-3i32..=3) as f64
                } else {
                    rng.random_range(-1_024_000i32..=1_024_000) as f64 / 1024.0
                };
                ledger.insert(h + 1, issue - Days::new(10 + j as u64), r);
                s.push(r);
            }
        }
        let iv = conformal::calibrate(&ledger, &record(issue, vec![yhat; MAX_HORIZON_HOURS]), &cfg);
        for (h, s) in samples.iter().enumerate() {
            let (lo, hi) = oracle_quantiles(s, a);
            let (got_lo, got_hi) = (iv.lower[h] - yhat, iv.upper[h] - yhat);
            ensure(got_lo == lo && got_hi == hi, || {
                format!("case {case} hour {} alpha {alpha} m {}: got ({got_lo}, {got_hi}), oracle ({lo}, {hi})", h + 1, s.len())
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "1000 ledgers, {checked} hour quantile pairs equal to the counting oracle"
    ))
}

// ---------------------------------------------------------------- A3

fn a3_no_leakage() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut poisoned_total = 0usize;
    for trial in 0..100 {
        let issue = plus(d(2024, 1, 1), rng.random_range(0..300));
        let as_of = issue.pred_opt().unwrap();
        let window = rng.random_range(5..=80usize);
        let offset = rng.random_range(0..=2i64);
        let lag = AvailabilityLag { offset };
        let cfg = ConformalConfig {
            window_days: window,
            min_days: rng.random_range(1..=12),
            lag,
            ..Default::default()
        };
        let mut clean = ResidualLedger::with_lag("G", window, lag);
        for hour in 1..=MAX_HORIZON_HOURS {
            let lag_days = lag.days(conformal::horizon_day(hour)) as u64;
            let newest_ok = as_of - Days::new(lag_days);
            for back in 0..rng.random_range(0..120u64) {
                if rng.random_bool(0.8) {
                    clean.insert(
                        hour,
                        newest_ok - Days::new(back),
                        rng.random_range(-80.0..80.0),
                    );
                }
            }
        }
        let mut poisoned = clean.clone();
        for hour in 1..=MAX_HORIZON_HOURS {
            let lag_days = lag.days(conformal::horizon_day(hour)) as u64;
            // Strictly later than the newest issue day usable at `as_of`.
            let first_bad = as_of - Days::new(lag_days) + Days::new(1);
            for ahead in 0..rng.random_range(0..15u64) {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                poisoned.insert(hour, first_bad + Days::new(ahead), sign * 1e6);
                poisoned_total += 1;
            }
        }
        let horizon: Vec<f64> = (0..MAX_HORIZON_HOURS)
            .map(|_| rng.random_range(50.0..700.0))
            .collect();
        let rec = record(issue, horizon);
        let a = conformal::calibrate(&clean, &rec, &cfg);
        let b = conformal::calibrate(&poisoned, &rec, &cfg);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(
            bits(&a.lower) == bits(&b.lower)
                && bits(&a.upper) == bits(&b.upper)
                && a.calibrated == b.calibrated,
            || format!("trial {trial}: poisoned ledger changed the interval"),
        )?;
    }
    Ok(format!(
        "100 trials, {poisoned_total} poison residuals of magnitude 1e6, intervals bit-identical"
    ))
}

// ---------------------------------------------------------------- A4

fn a4_imputation_exactness() -> Check {
    let len = 480;
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let truth_vals: Vec<f64> = (0..len).map(|i| 250.0 + 0.75 * i as f64).collect();
    let truth = CarbonSeries::from_values("AFF", t0, Resolution::Hourly, &truth_vals).unwrap();
    let mut masks = 0;
    let mut end_runs = 0;
    let mut worst = 0.0f64;
    for &fraction in &[0.125, 0.5, 0.75] {
        for seed in 0..50u64 {
            let g =
                generate_mask(len, &MaskPlan::new(fraction, 4, seed)).map_err(|e| e.to_string())?;
            let masked = MaskedSeries::from_mask(&truth, g.mask.clone()).unwrap();
            let est = impute(&masked, ImputeMethod::Linear).map_err(|e| e.to_string())?;
            let est = est.dense_values().unwrap();
            let first_obs = g.mask.iter().position(|m| *m).unwrap();
            let last_obs = g.mask.iter().rposition(|m| *m).unwrap();
            // Bracketed gaps must be exact; runs at either end follow the
            // constant-extension rule.
            let interior: Vec<usize> = (first_obs..=last_obs).filter(|&i| !g.mask[i]).collect();
            for i in (0..first_obs).chain(last_obs + 1..len) {
                end_runs += 1;
                let expect = if i < first_obs {
                    truth_vals[first_obs]
                } else {
                    truth_vals[last_obs]
                };
                ensure(est[i] == expect, || {
                    format!("end position {i} = {}, expected {expect}", est[i])
                })?;
            }
            if !interior.is_empty() {
                let observed: Vec<f64> = (0..len)
                    .filter(|&i| g.mask[i])
                    .map(|i| truth_vals[i])
                    .collect();
                let stats = NormStats::from_values(&observed).unwrap();
                let err = metrics::normalized_rmse(&truth_vals, &est, &interior, stats).unwrap();
                worst = worst.max(err);
                ensure(err <= 1e-9, || {
                    format!("fraction {fraction} seed {seed}: nRMSE {err:e}")
                })?;
            }
            if first_obs == 0 && last_obs == len - 1 {
                let full = score_imputation(
                    &truth,
                    &masked,
                    &CarbonSeries::from_values("AFF", t0, Resolution::Hourly, &est).unwrap(),
                )
                .map_err(|e| e.to_string())?;
                ensure(full <= 1e-9, || {
                    format!("fraction {fraction} seed {seed}: nRMSE {full:e}")
                })?;
            }
            masks += 1;
        }
    }

    // Spline: knots reproduced and C2 at interior knots.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut knots_checked = 0;
    let mut worst_c2 = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(3..40usize);
        let mut x = 0.0;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            x += rng.random_range(1..5) as f64;
            xs.push(x);
            ys.push(rng.random_range(0.0..800.0));
        }
        let s = NaturalCubicSpline::new(xs.clone(), ys.clone());
        for (&xk, &yk) in xs.iter().zip(&ys) {
            let e = (s.eval(xk) - yk).abs();
            ensure(e <= 1e-9 * yk.abs().max(1.0), || {
                format!("knot {xk}: off by {e:e}")
            })?;
        }
        for k in 1..n - 1 {
            let (left, right) = s.one_sided_at_knot(k);
            for (j, tol) in [(0usize, 1e-9), (1, 1e-8), (2, 1e-8)] {
                let scale = left[j].abs().max(right[j].abs()).max(1.0);
                let gap = (left[j] - right[j]).abs() / scale;
                if j == 2 {
                    worst_c2 = worst_c2.max(gap);
                }
                ensure(gap <= tol, || {
                    format!("knot {k}: derivative {j} jumps by {gap:e}")
                })?;
            }
            knots_checked += 1;
        }
    }
    // Pass-through of the spline imputer on a masked series.
    let g = generate_mask(len, &MaskPlan::new(0.5, 4, 9)).unwrap();
    let masked = MaskedSeries::from_mask(&truth, g.mask.clone()).unwrap();
    let sp = impute(&masked, ImputeMethod::CubicSpline).unwrap();
    for (i, keep) in g.mask.iter().enumerate() {
        if *keep {
            ensure(sp.values()[i] == truth.values()[i], || {
                format!("spline changed observed {i}")
            })?;
        }
    }
    Ok(format!(
        "linear: {masks} masks, worst interior nRMSE {worst:.1e}, {end_runs} end-run positions at constant extension; \
         spline: {knots_checked} interior knots, worst relative C2 jump {worst_c2:.1e}"
    ))
}

// ---------------------------------------------------------------- A5

fn a5_imputation_ordering() -> Check {
    let t0 = d(2024, 1, 1);
    let len = 24 * 60;
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..20u64 {
        let truth = two_sinusoids("S", t0, len, seed);
        let g =
            generate_mask(len, &MaskPlan::new(0.5, 4, 1000 + seed)).map_err(|e| e.to_string())?;
        let masked = MaskedSeries::from_mask(&truth, g.mask).unwrap();
        let score = |m: ImputeMethod| {
            score_imputation(&truth, &masked, &impute(&masked, m).unwrap()).unwrap()
        };
        let (lin, naive) = (score(ImputeMethod::Linear), score(ImputeMethod::Naive));
        if lin < naive {
            wins += 1;
        }
        lines.push((lin, naive));
    }
    let mean = |f: fn(&(f64, f64)) -> f64| lines.iter().map(f).sum::<f64>() / lines.len() as f64;
    let detail = format!(
        "linear < naive in {wins}/20 seeds (mean nRMSE linear {:.3}, naive {:.3})",
        mean(|p| p.0),
        mean(|p| p.1)
    );
    ensure(wins >= 19, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- A6

fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn a6_metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts = [0usize; 5];
    for case in 0..1000 {
        let n = rng.random_range(1..60usize);
        let near_zero = rng.random_bool(0.2);
        let y: Vec<f64> = (0..n)
            .map(|_| {
                if near_zero && rng.random_bool(0.5) {
                    rng.random_range(0.0..1.5)
                } else if rng.random_bool(0.1) {
                    rng.random_range(0..600) as f64
                } else {
                    rng.random_range(1.0..900.0)
                }
            })
            .collect();
        let f: Vec<f64> = y
            .iter()
            .map(|v| (v + rng.random_range(-100.0..100.0)).max(0.0))
            .collect();
        let lo: Vec<f64> = y
            .iter()
            .map(|v| v - rng.random_range(-20.0..60.0))
            .collect();
        let hi: Vec<f64> = lo
            .iter()
            .zip(&y)
            .map(|(l, v)| l.max(v + rng.random_range(-20.0..60.0)))
            .collect();
        // Exact ties with the bounds.
        let mut lo = lo;
        if n > 1 {
            lo[0] = y[0];
        }

        let kept: Vec<usize> = (0..n).filter(|&i| y[i] >= EPSILON).collect();
        let want_mape = (!kept.is_empty()).then(|| {
            kept.iter()
                .map(|&i| (y[i] - f[i]).abs() / y[i])
                .sum::<f64>()
                * 100.0
                / kept.len() as f64
        });
        match (metrics::mape(&y, &f), want_mape) {
            (Ok(got), Some(want)) => ensure(rel_close(got, want), || {
                format!("case {case}: mape {got} vs {want}")
            })?,
            (Err(MetricsError::AllBelowEpsilon), None) => {}
            (got, want) => return Err(format!("case {case}: mape {got:?} vs {want:?}")),
        }
        counts[0] += 1;

        let inside = (0..n).filter(|&i| lo[i] <= y[i] && y[i] <= hi[i]).count();
        let want_cov = inside as f64 * 100.0 / n as f64;
        let got_cov = metrics::coverage(&y, &lo, &hi).map_err(|e| e.to_string())?;
        ensure(rel_close(got_cov, want_cov), || {
            format!("case {case}: coverage {got_cov} vs {want_cov}")
        })?;
        counts[1] += 1;

        let want_niw = (!kept.is_empty()).then(|| {
            kept.iter().map(|&i| (hi[i] - lo[i]) / y[i]).sum::<f64>() * 100.0 / kept.len() as f64
        });
        match (metrics::niw(&y, &lo, &hi), want_niw) {
            (Ok(got), Some(want)) => ensure(rel_close(got, want), || {
                format!("case {case}: niw {got} vs {want}")
            })?,
            (Err(_), None) => {}
            (got, want) => return Err(format!("case {case}: niw {got:?} vs {want:?}")),
        }
        counts[2] += 1;

        if n >= 3 {
            let positions: Vec<usize> = (0..n).filter(|i| i % 3 == 1).collect();
            let observed: Vec<f64> = (0..n).filter(|i| i % 3 != 1).map(|i| y[i]).collect();
            let mu = observed.iter().sum::<f64>() / observed.len() as f64;
            let sd = (observed.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>()
                / observed.len() as f64)
                .sqrt();
            if sd > 1e-6 {
                let want = (positions
                    .iter()
                    .map(|&i| ((y[i] - f[i]) / sd).powi(2))
                    .sum::<f64>()
                    / positions.len() as f64)
                    .sqrt();
                let stats = NormStats::from_values(&observed).unwrap();
                let got = metrics::normalized_rmse(&y, &f, &positions, stats)
                    .map_err(|e| e.to_string())?;
                ensure(
                    (got - want).abs() <= 1e-12 * want.max(1e-300) || rel_close(got, want),
                    || format!("case {case}: nrmse {got} vs {want}"),
                )?;
                counts[3] += 1;
            }
        }

        let k = rng.random_range(1..30usize);
        let issuances: Vec<(Vec<f64>, Vec<f64>)> = (0..k)
            .map(|_| {
                let m = rng.random_range(1..24usize);
                let a: Vec<f64> = (0..m).map(|_| rng.random_range(1.0..500.0)).collect();
                let b: Vec<f64> = a.iter().map(|v| v * rng.random_range(0.5..1.5)).collect();
                (a, b)
            })
            .collect();
        let w = metrics::window_mapes(&issuances).map_err(|e| e.to_string())?;
        let per: Vec<f64> = issuances
            .iter()
            .map(|(a, b)| metrics::mape(a, b).unwrap())
            .collect();
        let mut sorted = per.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = (9 * k).div_ceil(10);
        ensure(w.p90 == sorted[rank - 1], || {
            format!("case {case}: p90 {} vs {}", w.p90, sorted[rank - 1])
        })?;
        let mean = per.iter().sum::<f64>() / k as f64;
        ensure(rel_close(w.mean, mean), || {
            format!("case {case}: mean {} vs {mean}", w.mean)
        })?;
        counts[4] += 1;
    }
    Ok(format!(
        "mape {}, coverage {}, niw {}, nrmse {}, window p90 {} instances agree",
        counts[0], counts[1], counts[2], counts[3], counts[4]
    ))
}

// ---------------------------------------------------------------- A7

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

/// Offline MAPE from the stored CSV files, parsed independently.
fn offline_mape(root: &Path, grid: &str, issue: NaiveDate, hours: usize) -> f64 {
    let mut truth = BTreeMap::new();
    for entry in std::fs::read_dir(root.join("data").join(grid)).unwrap() {
        let mut r = csv::Reader::from_path(entry.unwrap().path()).unwrap();
        for rec in r.records() {
            let rec = rec.unwrap();
            if !rec[1].is_empty() {
                truth.insert(rec[0].to_string(), rec[1].parse::<f64>().unwrap());
            }
        }
    }
    let path = root
        .join("forecasts")
        .join(grid)
        .join(format!("{issue}.csv"));
    let mut r = csv::Reader::from_path(path).unwrap();
    let (mut ys, mut fs) = (Vec::new(), Vec::new());
    for rec in r.records().take(hours) {
        let rec = rec.unwrap();
        if let Some(y) = truth.get(&rec[0]) {
            ys.push(*y);
            fs.push(rec[1].parse::<f64>().unwrap());
        }
    }
    metrics::mape(&ys, &fs).unwrap()
}

fn a7_end_to_end() -> Check {
    let (dir, svc) = common::service_with(ServiceConfig::default());
    let root = svc.config().data_root.clone();
    let series = PeriodicGrid::new("SYN", d(2023, 1, 1), 730)
        .with_noise(0.1, 7)
        .generate();
    svc.store()
        .store_actuals(&series, false)
        .map_err(|e| e.to_string())?;
    let days: Vec<NaiveDate> = d(2024, 11, 1).iter_days().take(30).collect();
    let started = Instant::now();
    for day in &days {
        let s = svc.issue_daily_forecasts(*day);
        ensure(s.failures.is_empty() && s.issued.len() == 1, || {
            format!("{day}: {:?}", s.failures)
        })?;
    }
    let issue_secs = started.elapsed().as_secs_f64();
    let svc = Arc::new(svc);
    let base = common::spawn(svc.clone());

    let last = *days.last().unwrap();
    let (status, body) = common::get(&format!(
        "{base}/v1/forecasts/SYN/{last}?horizon=96&pi=true"
    ));
    ensure(status == 200, || format!("forecast GET {status}: {body}"))?;
    let v = common::json(&body);
    let points = v["points"].as_array().ok_or("no points")?;
    ensure(points.len() == 96, || format!("{} points", points.len()))?;
    for p in points {
        let (l, u) = (
            p["lower"].as_f64().ok_or("no lower")?,
            p["upper"].as_f64().ok_or("no upper")?,
        );
        ensure(0.0 <= l && l <= u, || format!("bad interval [{l}, {u}]"))?;
    }
    let calibrated = v["calibrated"]
        .as_array()
        .ok_or("no calibrated flags")?
        .iter()
        .filter(|c| c.as_bool() == Some(true))
        .count();

    let mut worst = 0.0f64;
    for day in &days {
        for hours in [24usize, 96] {
            let (status, body) =
                common::get(&format!("{base}/v1/accuracy/SYN/{day}?horizon={hours}"));
            ensure(status == 200, || format!("accuracy {day}: {status} {body}"))?;
            let got = common::json(&body)["mape"].as_f64().ok_or("no mape")?;
            let want = offline_mape(&root, "SYN", *day, hours);
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= 1e-9, || {
                format!("{day}/{hours}h: api {got} vs offline {want}")
            })?;
        }
    }

    let before = snapshot(&root);
    for day in &days {
        svc.issue_daily_forecasts(*day);
    }
    let after = snapshot(&root);
    ensure(before == after, || {
        let changed: Vec<_> = before
            .iter()
            .filter(|(k, v)| after.get(*k) != Some(*v))
            .map(|(k, _)| k.display().to_string())
            .collect();
        format!("re-issuance changed {changed:?}")
    })?;
    svc.issue_daily_forecasts(days[12]);
    let again = snapshot(&root);
    ensure(again == after, || {
        let changed: Vec<_> = after
            .iter()
            .filter(|(k, v)| again.get(*k) != Some(*v))
            .map(|(k, _)| k.display().to_string())
            .collect();
        format!("re-issuing {} alone changed {changed:?}", days[12])
    })?;
    drop(dir);
    Ok(format!(
        "30 issuances in {issue_secs:.2} s, 96 bounded points ({calibrated}/4 days calibrated), \
         accuracy max |api - offline| {worst:.1e}, {} files byte-identical after re-issuance",
        after.len()
    ))
}

// ---------------------------------------------------------------- A8

const CISO_ENV: &str = "GRIDCAST_CISO_CSV";

fn a8_ciso_ewma(path: &Path) -> Check {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let rows = gridcast_store::csvio::read_actuals(&text, &path.display().to_string())
        .map_err(|e| e.to_string())?;
    let start = day_start(d(2020, 1, 1));
    let end = day_start(d(2022, 1, 1));
    let map: BTreeMap<_, _> = rows
        .into_iter()
        .filter(|(t, _)| *t >= start && *t < end)
        .collect();
    let mut values = Vec::new();
    let mut t = start;
    while t < end {
        values.push(map.get(&t).copied().flatten());
        t += chrono::Duration::hours(1);
    }
    let series =
        CarbonSeries::new("CISO", start, Resolution::Hourly, values).map_err(|e| e.to_string())?;
    let mut spec = ProtocolSpec::new(Protocol::Forecast4d);
    spec.backend = "ewma".into();
    spec.test = TestRange::dates(d(2021, 7, 1), d(2021, 12, 31));
    let run = run_forecast_protocol(
        &spec,
        &[series].into_iter().collect::<InMemorySource>(),
        &BackendRegistry::with_native_baselines(),
    )
    .map_err(|e| e.to_string())?;
    let r = run
        .reports
        .first()
        .ok_or_else(|| format!("{:?}", run.failures))?;
    let (mean, p90) = (r.mean_mape.ok_or("no mape")?, r.p90_mape.ok_or("no p90")?);
    let detail = format!(
        "mean {mean:.2}% (12.93 +/- 3), p90 {p90:.2}% (28.15 +/- 6), {} issuances",
        r.n_issuances
    );
    ensure(
        (mean - 12.93).abs() <= 3.0 && (p90 - 28.15).abs() <= 6.0,
        || detail.clone(),
    )?;
    Ok(detail)
}

// ---------------------------------------------------------------- A9

fn a9_degradation_shape() -> Check {
    let lookbacks = vec![1usize, 2, 4, 7, 15, 30];
    let mut spec = ProtocolSpec::new(Protocol::ForecastExtended);
    spec.lookback_days = lookbacks.clone();
    spec.backend = "seasonal-naive".into();
    spec.test = TestRange::dates(d(2022, 3, 1), d(2022, 3, 31));
    let source: InMemorySource = [PeriodicGrid::new("PER", d(2022, 1, 1), 120).generate()]
        .into_iter()
        .collect();
    let run = run_forecast_protocol(&spec, &source, &BackendRegistry::with_native_baselines())
        .map_err(|e| e.to_string())?;
    ensure(run.failures.is_empty(), || format!("{:?}", run.failures))?;
    let tables = degradation_table(&run.reports);
    ensure(tables.len() == 1, || format!("{} tables", tables.len()))?;
    let t = &tables[0];
    ensure(t.horizon_days == 21, || {
        format!("horizon {} days", t.horizon_days)
    })?;
    let rows: Vec<usize> = t.rows.iter().map(|r| r.lookback_days).collect();
    ensure(rows == lookbacks, || format!("rows {rows:?}"))?;
    for &l in &lookbacks {
        for k in 1..=21 {
            ensure(t.drop_at(l, k).is_some(), || {
                format!("missing D{k} for {l} days")
            })?;
        }
        ensure(t.drop_at(l, 21) == Some(0.0), || {
            format!("Drop21 for {l} days = {:?}", t.drop_at(l, 21))
        })?;
    }
    let text = t.to_text();
    let header = text.lines().nth(1).unwrap_or_default();
    let cols: Vec<&str> = header.split_whitespace().collect();
    let want: Vec<String> = std::iter::once("lookback".to_string())
        .chain(std::iter::once("MAPE(D1)".to_string()))
        .chain((1..=21).map(|k| format!("D{k}")))
        .collect();
    ensure(cols == want, || format!("header {cols:?}"))?;
    ensure(text.lines().any(|l| l.starts_with("30*24")), || {
        "no 30*24 row".into()
    })?;
    Ok(format!(
        "{} lookback rows x D1..D21, Drop21 = 0 for all",
        rows.len()
    ))
}

// ---------------------------------------------------------------- runner

fn run(id: &str, name: &str, f: impl FnOnce() -> Check) -> bool {
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(detail) => {
            println!("{id} PASS {name} ({secs:.1} s): {detail}");
            true
        }
        Err(detail) => {
            println!("{id} FAIL {name} ({secs:.1} s): {detail}");
            false
        }
    }
}

fn main() {
    // `cargo test -- --list` and similar probes expect no side effects.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= run("A1", "conformal coverage", a1_conformal_coverage);
    ok &= run("A2", "quantile oracle", a2_quantile_oracle);
    ok &= run("A3", "no leakage", a3_no_leakage);
    ok &= run("A4", "imputation exactness", a4_imputation_exactness);
    ok &= run("A5", "imputation ordering", a5_imputation_ordering);
    ok &= run("A6", "metrics oracle", a6_metrics_oracle);
    ok &= run("A7", "end-to-end service", a7_end_to_end);
    match std::env::var_os(CISO_ENV) {
        // Optional: a miss is reported but does not fail the suite.
        Some(p) => {
            let p = PathBuf::from(p);
            if !run("A8", "CISO EWMA benchmark", || a8_ciso_ewma(&p)) {
                println!("A8 note: diagnostic only; see README");
            }
        }
        None => println!("A8 SKIP CISO EWMA benchmark: set {CISO_ENV} to an hourly actuals CSV covering 2020-2021"),
    }
    ok &= run(
        "A9",
        "extended-horizon degradation table",
        a9_degradation_shape,
    );
    if !ok {
        std::process::exit(1);
    }
}
