mod common;

use common::{day, ingest, service_with};
use gridcast_core::series::{CarbonSeries, Resolution};
use gridcast_eval::synthetic::PeriodicGrid;
use gridcast_server::ServiceConfig;
use gridcast_store::CatalogEntry;

#[test]
fn failures_are_isolated_per_grid() {
    let (_dir, svc) = service_with(ServiceConfig::default());
    ingest(
        &svc,
        &PeriodicGrid::new("GOOD", day(2024, 1, 1), 20).generate(),
    );
    svc.store()
        .register_grid(CatalogEntry::new("EMPTY", Resolution::Hourly))
        .unwrap();
    svc.store()
        .register_grid(CatalogEntry::new("FINE", Resolution::FiveMinute))
        .unwrap();
    let s = svc.issue_daily_forecasts(day(2024, 1, 15));
    assert_eq!(s.issued.len(), 1);
    assert_eq!(s.issued[0].grid_id, "GOOD");
    let codes: Vec<_> = s
        .failures
        .iter()
        .map(|f| (f.grid_id.as_str(), f.code.as_str()))
        .collect();
    assert_eq!(
        codes,
        vec![("EMPTY", "no_data"), ("FINE", "invalid_request")]
    );
}

#[test]
fn lookback_gaps_are_filled_before_forecasting() {
    let (_dir, svc) = service_with(ServiceConfig::default());
    let full = PeriodicGrid::new("G", day(2024, 1, 1), 20).generate();
    let mut values = full.values().to_vec();
    // Gap in the last lookback day: hour 10 missing.
    values[13 * 24 + 10] = None;
    ingest(&svc, &full.with_values(values).unwrap());
    let s = svc.issue_daily_forecasts(day(2024, 1, 15));
    assert_eq!(s.issued[0].imputed_steps, 1);
    let rec = svc
        .store()
        .load_forecast("G", day(2024, 1, 15))
        .unwrap()
        .unwrap();
    assert_eq!(rec.horizon.len(), 96);
    assert!(rec.horizon.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn residuals_use_only_truth_before_the_issue_day() {
    let (_dir, svc) = service_with(ServiceConfig::default());
    let t0 = day(2024, 1, 1);
    // Constant truth, so every residual is zero until the spike.
    let mut values = vec![Some(100.0); 24 * 30];
    let spike = 20 * 24;
    for v in &mut values[spike..] {
        *v = Some(900.0);
    }
    let series = CarbonSeries::new(
        "C",
        gridcast_core::series::day_start(t0),
        Resolution::Hourly,
        values,
    )
    .unwrap();
    ingest(&svc, &series);
    for d in day(2024, 1, 8).iter_days().take(13) {
        assert!(svc.issue_daily_forecasts(d).failures.is_empty());
    }
    // The last issuance (2024-01-20) may only see truth before 01-20 00:00;
    // the spike starts on 01-21, so every recorded residual must be zero.
    let ledger = svc.store().load_ledger("C").unwrap().unwrap();
    for hour in 1..=96 {
        for e in ledger.available_residuals(hour, day(2024, 1, 30)) {
            assert_eq!(e.residual, 0.0, "hour {hour} issue {}", e.issue_day);
        }
    }
}

#[test]
fn reissuing_after_later_days_rewrites_identical_files() {
    let (dir, svc) = service_with(ServiceConfig::default());
    ingest(
        &svc,
        &PeriodicGrid::new("G", day(2024, 1, 1), 60)
            .with_noise(0.1, 5)
            .generate(),
    );
    let days: Vec<_> = day(2024, 1, 20).iter_days().take(20).collect();
    for d in &days {
        assert!(svc.issue_daily_forecasts(*d).failures.is_empty());
    }
    let path = dir.path().join("store/forecasts/G/2024-01-25.csv");
    let before = std::fs::read(&path).unwrap();
    svc.issue_daily_forecasts(day(2024, 1, 25));
    assert_eq!(std::fs::read(&path).unwrap(), before);
}
