use std::path::{Path, PathBuf};
use std::str::FromStr;

use gridcast_core::metrics::{format_table, EvalReport};
use gridcast_store::write_atomic;
use serde::{Deserialize, Serialize};

use crate::degradation::DegradationTable;
use crate::error::EvalError;
use crate::forecast::ProtocolRun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Table,
    Csv,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Table, ReportFormat::Csv];

    fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Table => "txt",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" | "txt" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown report format `{s}` (json, table, csv)")),
        }
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    reports: &'a [EvalReport],
    failures: &'a [crate::forecast::GridFailure],
    degradation: &'a [DegradationTable],
}

const CSV_HEADER: [&str; 22] = [
    "grid_id",
    "protocol",
    "backend",
    "lookback_hours",
    "horizon_hours",
    "alpha",
    "window_days",
    "mask_fraction",
    "patch_length",
    "seed",
    "n_issuances",
    "mean_mape",
    "p90_mape",
    "p90_mape_hourly",
    "coverage_overall",
    "coverage_d1",
    "coverage_d2",
    "coverage_d3",
    "coverage_d4",
    "mean_niw",
    "nrmse",
    "excluded_hours",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn to_csv(reports: &[EvalReport]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in reports {
        let c = &r.config;
        let cov = |k: usize| opt(r.coverage_by_day.get(k).copied().flatten());
        w.write_record([
            r.grid_id.clone(),
            r.protocol.to_string(),
            c.backend.clone(),
            opt(c.lookback_hours),
            opt(c.horizon_hours),
            opt(c.alpha),
            opt(c.window_days),
            opt(c.mask_fraction),
            opt(c.patch_length),
            opt(c.seed),
            r.n_issuances.to_string(),
            opt(r.mean_mape),
            opt(r.p90_mape),
            opt(r.p90_mape_hourly),
            opt(r.coverage_overall),
            cov(0),
            cov(1),
            cov(2),
            cov(3),
            opt(r.mean_niw),
            opt(r.nrmse),
            r.excluded_hours.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory writer")
}

fn to_text(run: &ProtocolRun, tables: &[DegradationTable]) -> String {
    let mut out = format_table(&run.reports);
    for t in tables {
        out.push('\n');
        out.push_str(&t.to_text());
    }
    if !run.failures.is_empty() {
        out.push_str("\nfailures:\n");
        for f in &run.failures {
            let lookback = f
                .lookback_days
                .map(|l| format!(" (lookback {l}d)"))
                .unwrap_or_default();
            out.push_str(&format!("  {}{}: {}\n", f.grid_id, lookback, f.error));
        }
    }
    out
}

/// Writes `{dir}/{name}.{json,txt,csv}` for the requested formats and
/// returns the paths. Output depends only on the inputs.
pub fn emit_report(
    run: &ProtocolRun,
    tables: &[DegradationTable],
    formats: &[ReportFormat],
    dir: &Path,
    name: &str,
) -> Result<Vec<PathBuf>, EvalError> {
    let mut written = Vec::new();
    for &format in formats {
        let path = dir.join(format!("{name}.{}", format.extension()));
        let bytes = match format {
            ReportFormat::Json => {
                let mut b = serde_json::to_vec_pretty(&JsonReport {
                    reports: &run.reports,
                    failures: &run.failures,
                    degradation: tables,
                })
                .expect("reports serialize");
                b.push(b'\n');
                b
            }
            ReportFormat::Table => to_text(run, tables).into_bytes(),
            ReportFormat::Csv => to_csv(&run.reports),
        };
        write_atomic(&path, &bytes).map_err(|e| EvalError::Output(e.to_string()))?;
        written.push(path);
    }
    Ok(written)
}
