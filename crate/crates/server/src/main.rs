use std::collections::BTreeMap;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::{NaiveDate, Utc};
use clap::{Parser, Subcommand};
use gridcast_core::series::{CarbonSeries, Resolution};
use gridcast_eval::{degradation_table, emit_report, run_protocol, ProtocolSpec, ReportFormat};
use gridcast_server::service::parse_date;
use gridcast_server::{ApiError, ImputeRequest, Service, ServiceConfig};
use gridcast_store::csvio::{read_actuals, write_actuals};
use gridcast_store::CatalogEntry;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "gridcast",
    version,
    about = "Carbon-intensity forecasting, intervals and gap filling"
)]
struct Cli {
    /// TOML configuration file; defaults to $GRIDCAST_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured datastore root.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<SocketAddr>,
        /// Compute forecasts that were not issued ahead of time.
        #[arg(long)]
        on_demand: bool,
    },
    /// Run one fetch cycle for every catalog grid.
    Fetch {
        /// Day to fetch (YYYY-MM-DD); today in UTC by default.
        #[arg(long)]
        date: Option<String>,
    },
    /// Merge an actuals CSV into the datastore.
    Ingest {
        #[arg(long)]
        grid: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value = "hourly")]
        resolution: String,
        #[arg(long)]
        overwrite: bool,
    },
    /// Issue daily forecasts for every grid.
    Issue {
        /// First issue day; today in UTC by default.
        #[arg(long)]
        date: Option<String>,
        /// Number of consecutive days to issue.
        #[arg(long, default_value_t = 1)]
        days: u32,
    },
    /// Fill the gaps of an actuals CSV.
    Impute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long, default_value = "hourly")]
        resolution: String,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run an evaluation protocol spec (TOML or JSON).
    Eval {
        spec: PathBuf,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        /// Comma-separated subset of json, table, csv.
        #[arg(long, default_value = "json,table,csv")]
        format: String,
    },
    /// List supported grids.
    Grids,
    /// Stored actuals for one day.
    Ci { grid: String, date: String },
    /// Forecast issued on a day.
    Forecast {
        grid: String,
        date: String,
        #[arg(long)]
        horizon: Option<usize>,
        /// Include prediction intervals.
        #[arg(long)]
        pi: bool,
        /// Fail instead of computing a forecast that was not issued.
        #[arg(long)]
        no_on_demand: bool,
    },
    /// MAPE of an issued forecast against stored truth.
    Accuracy {
        grid: String,
        date: String,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Show or select the default model.
    Model {
        name: Option<String>,
        mode: Option<String>,
    },
}

#[derive(Debug)]
enum CliError {
    Api(ApiError),
    Other(String),
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        CliError::Api(e)
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn print_json<T: Serialize>(v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(other)?;
    // A closed pipe (`| head`) is not an error worth reporting.
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(other(e)),
        _ => Ok(()),
    }
}

fn parse_resolution(s: &str) -> Result<Resolution, CliError> {
    match s {
        "hourly" | "1h" => Ok(Resolution::Hourly),
        "five_minute" | "5min" | "5m" => Ok(Resolution::FiveMinute),
        _ => Err(CliError::Other(format!(
            "unknown resolution `{s}` (hourly, five_minute)"
        ))),
    }
}

/// Runs a fetch cycle for today's UTC date every `period`, starting now.
async fn fetch_loop(service: Arc<Service>, period: std::time::Duration) {
    let mut ticks = tokio::time::interval(period);
    ticks.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        ticks.tick().await;
        let svc = service.clone();
        match tokio::task::spawn_blocking(move || svc.fetch(today())).await {
            Ok(Ok(summary)) => log::info!(
                "fetch cycle: {} rows added, {} errors",
                summary.rows_added(),
                summary.error_count()
            ),
            Ok(Err(e)) => log::error!("fetch cycle failed: {e}"),
            Err(e) => log::error!("fetch task panicked: {e}"),
        }
    }
}

fn today() -> NaiveDate {
    Utc::now().date_naive()
}

/// Reads an actuals CSV into one contiguous series.
fn read_series(path: &Path, grid: &str, resolution: Resolution) -> Result<CarbonSeries, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| other(format!("{}: {e}", path.display())))?;
    let rows: BTreeMap<_, _> = read_actuals(&text, &path.display().to_string())
        .map_err(other)?
        .into_iter()
        .collect();
    let (Some((&first, _)), Some((&last, _))) = (rows.first_key_value(), rows.last_key_value())
    else {
        return Err(CliError::Other(format!("{} has no rows", path.display())));
    };
    let mut values = Vec::new();
    let mut ts = first;
    while ts <= last {
        values.push(rows.get(&ts).copied().flatten());
        ts += resolution.step();
    }
    if values.len() < rows.len() {
        return Err(CliError::Other(
            "timestamps do not match the resolution".into(),
        ));
    }
    CarbonSeries::new(grid, first, resolution, values).map_err(other)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = ServiceConfig::load(cli.config.as_deref()).map_err(other)?;
    if let Some(root) = cli.data_root {
        config.data_root = root;
    }
    match cli.command {
        Command::Serve { listen, on_demand } => {
            if let Some(addr) = listen {
                config.listen = addr;
            }
            config.on_demand |= on_demand;
            let addr = config.listen;
            let service = Arc::new(Service::open(config).map_err(other)?);
            let rt = tokio::runtime::Runtime::new().map_err(other)?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                log::info!("listening on {}", listener.local_addr()?);
                if let Some(period) = service.config().fetch.as_ref().map(|f| f.period()) {
                    tokio::spawn(fetch_loop(service.clone(), period));
                }
                gridcast_server::api::serve(service, listener).await
            })
            .map_err(other)
        }
        Command::Fetch { date } => {
            let day = date
                .as_deref()
                .map(parse_date)
                .transpose()?
                .unwrap_or_else(today);
            let service = Service::open(config).map_err(other)?;
            let summary = service.fetch(day)?;
            print_json(&summary)?;
            if summary.error_count() == summary.grids.len() && !summary.grids.is_empty() {
                return Err(CliError::Other("every grid failed".into()));
            }
            Ok(())
        }
        Command::Ingest {
            grid,
            file,
            resolution,
            overwrite,
        } => {
            let resolution = parse_resolution(&resolution)?;
            let series = read_series(&file, &grid, resolution)?;
            let service = Service::open(config).map_err(other)?;
            if service.store().grid(&grid).is_err() {
                service
                    .store()
                    .register_grid(CatalogEntry::new(&grid, resolution))
                    .map_err(other)?;
            }
            let summary = service
                .store()
                .store_actuals(&series, overwrite)
                .map_err(other)?;
            println!(
                "{grid}: {} added, {} updated, {} unchanged",
                summary.added, summary.updated, summary.unchanged
            );
            Ok(())
        }
        Command::Issue { date, days } => {
            let first = date
                .as_deref()
                .map(parse_date)
                .transpose()?
                .unwrap_or_else(today);
            let service = Service::open(config).map_err(other)?;
            let mut failed = false;
            for day in first.iter_days().take(days as usize) {
                let summary = service.issue_daily_forecasts(day);
                failed |= !summary.failures.is_empty();
                print_json(&summary)?;
            }
            if failed {
                return Err(CliError::Other("some grids could not be issued".into()));
            }
            Ok(())
        }
        Command::Impute {
            input,
            method,
            resolution,
            output,
        } => {
            let series = read_series(&input, "input", parse_resolution(&resolution)?)?;
            let service = Service::open(config).map_err(other)?;
            let req = ImputeRequest {
                grid_id: None,
                start: Some(series.start()),
                resolution: Some(series.resolution()),
                mask: series
                    .values()
                    .iter()
                    .map(|v| u8::from(v.is_some()))
                    .collect(),
                values: series.values().to_vec(),
                method,
            };
            let filled = service.impute(&req)?;
            let rows: Vec<_> = filled
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (series.timestamp(i), Some(*v)))
                .collect();
            let bytes = write_actuals(&rows);
            match output {
                Some(p) => {
                    std::fs::write(&p, bytes).map_err(|e| other(format!("{}: {e}", p.display())))
                }
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&bytes).map_err(other)
                }
            }
        }
        Command::Eval { spec, out, format } => {
            let spec = ProtocolSpec::from_path(&spec).map_err(other)?;
            let formats = format
                .split(',')
                .map(|f| f.trim().parse::<ReportFormat>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::Other)?;
            let service = Service::open(config).map_err(other)?;
            let run = run_protocol(&spec, service.store(), service.registry()).map_err(other)?;
            let tables = degradation_table(&run.reports);
            std::fs::create_dir_all(&out).map_err(|e| other(format!("{}: {e}", out.display())))?;
            let name = spec.protocol.to_string();
            for path in emit_report(&run, &tables, &formats, &out, &name).map_err(other)? {
                println!("{}", path.display());
            }
            if run.reports.is_empty() {
                return Err(CliError::Other(format!(
                    "no grid could be evaluated ({} failures)",
                    run.failures.len()
                )));
            }
            Ok(())
        }
        Command::Grids => print_json(&Service::open(config).map_err(other)?.grids()),
        Command::Ci { grid, date } => {
            let service = Service::open(config).map_err(other)?;
            print_json(&service.ci_historical(&grid, parse_date(&date)?)?)
        }
        Command::Forecast {
            grid,
            date,
            horizon,
            pi,
            no_on_demand,
        } => {
            let service = Service::open(config).map_err(other)?;
            print_json(&service.ci_forecast(
                &grid,
                parse_date(&date)?,
                horizon,
                pi,
                !no_on_demand,
            )?)
        }
        Command::Accuracy {
            grid,
            date,
            horizon,
        } => {
            let service = Service::open(config).map_err(other)?;
            print_json(&service.accuracy(&grid, parse_date(&date)?, horizon)?)
        }
        Command::Model { name, mode } => {
            let service = Service::open(config).map_err(other)?;
            match (name, mode) {
                (None, _) => print_json(&service.current_model()),
                (Some(name), mode) => {
                    print_json(&service.set_model(&name, mode.as_deref().unwrap_or("ZS"))?)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Api(e)) => {
            eprintln!(
                "{}",
                serde_json::to_string(&e.body()).unwrap_or_else(|_| e.to_string())
            );
            ExitCode::FAILURE
        }
        Err(CliError::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
