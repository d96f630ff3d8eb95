use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Datelike, Days, NaiveDate, Utc};
use gridcast_core::backends::{BackendDescriptor, ForecastRecord};
use gridcast_core::conformal::{IntervalSet, ResidualLedger, HOURS_PER_DAY};
use gridcast_core::series::{day_start, CarbonSeries, Resolution};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::catalog::{CatalogEntry, GridCatalog};
use crate::csvio::{self, ForecastRow};
use crate::error::{Result, StoreError};

/// Outcome of merging a series into stored actuals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeSummary {
    pub added: usize,
    pub updated: usize,
    pub unchanged: usize,
}

impl MergeSummary {
    pub fn changed(&self) -> usize {
        self.added + self.updated
    }
}

/// Backend identity and layout details stored next to each forecast CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ForecastMeta {
    grid_id: String,
    issue_day: NaiveDate,
    resolution: Resolution,
    backend: BackendDescriptor,
}

pub fn validate_grid_id(grid_id: &str) -> Result<()> {
    let ok = !grid_id.is_empty()
        && !grid_id.starts_with('.')
        && grid_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidGridId(grid_id.to_string()))
    }
}

/// Writes `bytes` to a temporary file in the target directory and renames it
/// into place, so readers see either the old or the new content. Identical
/// content is left untouched.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(());
    }
    let dir = path.parent().expect("store paths have a parent directory");
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| StoreError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| StoreError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| StoreError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| StoreError::io(path, e.error))?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Json {
                path: path.to_path_buf(),
                source,
            }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(StoreError::io(path, e)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("store types serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_text(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(StoreError::io(path, e)),
    }
}

/// File-backed datastore rooted at one directory:
///
/// ```text
/// catalog.json
/// data/{grid}/{year}.csv
/// forecasts/{grid}/{YYYY-MM-DD}.csv   (+ .json sidecar with backend identity)
/// ledgers/{grid}.json
/// state/{name}.json
/// ```
///
/// Writes to one grid are serialized; reads never block on writers because
/// every file is replaced atomically.
pub struct DataStore {
    root: PathBuf,
    catalog: RwLock<GridCatalog>,
    writers: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl DataStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        let catalog = read_json(&root.join("catalog.json"))?.unwrap_or_default();
        Ok(Self {
            root,
            catalog: RwLock::new(catalog),
            writers: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn writer(&self, grid_id: &str) -> Arc<Mutex<()>> {
        self.writers
            .lock()
            .expect("writer map poisoned")
            .entry(grid_id.to_string())
            .or_default()
            .clone()
    }

    pub fn catalog(&self) -> GridCatalog {
        self.catalog.read().expect("catalog lock poisoned").clone()
    }

    pub fn grid(&self, grid_id: &str) -> Result<CatalogEntry> {
        self.catalog
            .read()
            .expect("catalog lock poisoned")
            .get(grid_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownGrid(grid_id.to_string()))
    }

    fn update_catalog(&self, f: impl FnOnce(&mut GridCatalog)) -> Result<()> {
        let mut cat = self.catalog.write().expect("catalog lock poisoned");
        let before = cat.clone();
        f(&mut cat);
        if *cat != before {
            write_json(&self.root.join("catalog.json"), &*cat)?;
        }
        Ok(())
    }

    /// Adds or updates a grid in the catalog.
    pub fn register_grid(&self, entry: CatalogEntry) -> Result<()> {
        validate_grid_id(&entry.grid_id)?;
        if let Ok(existing) = self.grid(&entry.grid_id) {
            if existing.resolution != entry.resolution && existing.first_day.is_some() {
                return Err(StoreError::schema(
                    "catalog.json",
                    format!(
                        "grid `{}` already holds {} data",
                        entry.grid_id,
                        existing.resolution.as_str()
                    ),
                ));
            }
        }
        self.update_catalog(|c| c.upsert(entry))
    }

    fn actuals_path(&self, grid_id: &str, year: i32) -> PathBuf {
        self.root
            .join("data")
            .join(grid_id)
            .join(format!("{year}.csv"))
    }

    fn read_year(&self, grid_id: &str, year: i32) -> Result<BTreeMap<DateTime<Utc>, f64>> {
        let path = self.actuals_path(grid_id, year);
        let Some(text) = read_text(&path)? else {
            return Ok(BTreeMap::new());
        };
        let rows = csvio::read_actuals(&text, &path.display().to_string())?;
        Ok(rows
            .into_iter()
            .filter_map(|(ts, v)| v.map(|v| (ts, v)))
            .collect())
    }

    fn write_year(
        &self,
        grid_id: &str,
        year: i32,
        resolution: Resolution,
        values: &BTreeMap<DateTime<Utc>, f64>,
    ) -> Result<()> {
        let (Some((&first, _)), Some((&last, _))) =
            (values.first_key_value(), values.last_key_value())
        else {
            return Ok(());
        };
        let mut rows = Vec::new();
        let mut ts = first;
        while ts <= last {
            rows.push((ts, values.get(&ts).copied()));
            ts += resolution.step();
        }
        write_atomic(
            &self.actuals_path(grid_id, year),
            &csvio::write_actuals(&rows),
        )
    }

    /// Merges the present values of `series` into stored actuals. Identical
    /// values (at stored precision) are no-ops; a different value for an
    /// already stored timestamp is a conflict unless `overwrite` is set.
    /// Nothing is written when any conflict is found. Unknown grids are
    /// added to the catalog.
    pub fn store_actuals(&self, series: &CarbonSeries, overwrite: bool) -> Result<MergeSummary> {
        let grid_id = series.grid_id();
        validate_grid_id(grid_id)?;
        let lock = self.writer(grid_id);
        let _guard = lock.lock().expect("grid writer poisoned");
        match self.grid(grid_id) {
            Ok(entry) if entry.resolution != series.resolution() => {
                return Err(StoreError::schema(
                    grid_id,
                    format!(
                        "grid stores {} data, got {}",
                        entry.resolution.as_str(),
                        series.resolution().as_str()
                    ),
                ));
            }
            Ok(_) => {}
            Err(_) => self.register_grid(CatalogEntry::new(grid_id, series.resolution()))?,
        }

        let mut by_year: BTreeMap<i32, Vec<(DateTime<Utc>, f64)>> = BTreeMap::new();
        for (ts, v) in series.iter() {
            if let Some(v) = v {
                by_year.entry(ts.year()).or_default().push((ts, v));
            }
        }
        let mut summary = MergeSummary::default();
        let mut pending = Vec::new();
        for (year, new_values) in by_year {
            let mut stored = self.read_year(grid_id, year)?;
            let mut dirty = false;
            for (ts, v) in new_values {
                let new = csvio::stored_precision(v);
                match stored.get(&ts) {
                    Some(&old) if csvio::format_value(old) == csvio::format_value(new) => {
                        summary.unchanged += 1;
                    }
                    Some(&old) if !overwrite => {
                        return Err(StoreError::ConflictingValue {
                            timestamp: ts,
                            stored: csvio::format_value(old),
                            new: csvio::format_value(new),
                        });
                    }
                    Some(_) => {
                        stored.insert(ts, new);
                        summary.updated += 1;
                        dirty = true;
                    }
                    None => {
                        stored.insert(ts, new);
                        summary.added += 1;
                        dirty = true;
                    }
                }
            }
            if dirty {
                pending.push((year, stored));
            }
        }
        let mut range: Option<(NaiveDate, NaiveDate)> = None;
        for (year, values) in &pending {
            self.write_year(grid_id, *year, series.resolution(), values)?;
            let first = values
                .keys()
                .next()
                .expect("dirty years are non-empty")
                .date_naive();
            let last = values
                .keys()
                .next_back()
                .expect("dirty years are non-empty")
                .date_naive();
            range = Some(range.map_or((first, last), |(f, l)| (f.min(first), l.max(last))));
        }
        if let Some((first, last)) = range {
            self.update_catalog(|c| {
                if let Some(e) = c.get_mut(grid_id) {
                    e.extend_range(first, last);
                }
            })?;
        }
        Ok(summary)
    }

    /// Stored actuals for `[start, end)`, with `None` where nothing is stored.
    pub fn load_range(
        &self,
        grid_id: &str,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    ) -> Result<CarbonSeries> {
        let entry = self.grid(grid_id)?;
        let res = entry.resolution;
        let mut values = Vec::new();
        let mut year_cache: Option<(i32, BTreeMap<DateTime<Utc>, f64>)> = None;
        let mut ts = start;
        while ts < end {
            let year = ts.year();
            if year_cache.as_ref().is_none_or(|(y, _)| *y != year) {
                year_cache = Some((year, self.read_year(grid_id, year)?));
            }
            let (_, map) = year_cache.as_ref().expect("cache filled above");
            values.push(map.get(&ts).copied());
            ts += res.step();
        }
        Ok(CarbonSeries::new(grid_id, start, res, values)?)
    }

    /// Actuals for the UTC days `from..=to`.
    pub fn load_actuals(
        &self,
        grid_id: &str,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<CarbonSeries> {
        let end = to
            .checked_add_days(Days::new(1))
            .map(day_start)
            .ok_or_else(|| StoreError::NoData {
                grid: grid_id.to_string(),
            })?;
        self.load_range(grid_id, day_start(from), end.max(day_start(from)))
    }

    fn forecast_dir(&self, grid_id: &str) -> PathBuf {
        self.root.join("forecasts").join(grid_id)
    }

    fn forecast_paths(&self, grid_id: &str, day: NaiveDate) -> (PathBuf, PathBuf) {
        let dir = self.forecast_dir(grid_id);
        let stem = day.format("%Y-%m-%d").to_string();
        (
            dir.join(format!("{stem}.csv")),
            dir.join(format!("{stem}.json")),
        )
    }

    /// Stores one issuance, replacing any earlier record for the same
    /// grid and issue day.
    pub fn store_forecast(&self, record: &ForecastRecord) -> Result<()> {
        self.grid(&record.grid_id)?;
        let lock = self.writer(&record.grid_id);
        let _guard = lock.lock().expect("grid writer poisoned");
        let rows: Vec<ForecastRow> = record
            .horizon
            .iter()
            .enumerate()
            .map(|(i, &yhat)| ForecastRow {
                target: record.target_timestamp(i),
                yhat,
                bounds: record
                    .interval
                    .as_ref()
                    .map(|iv| (iv.lower[i], iv.upper[i], iv.is_calibrated_at(i))),
            })
            .collect();
        let meta = ForecastMeta {
            grid_id: record.grid_id.clone(),
            issue_day: record.issue_day,
            resolution: record.resolution,
            backend: record.backend.clone(),
        };
        let (csv_path, meta_path) = self.forecast_paths(&record.grid_id, record.issue_day);
        write_json(&meta_path, &meta)?;
        write_atomic(&csv_path, &csvio::write_forecast(&rows))
    }

    pub fn load_forecast(&self, grid_id: &str, day: NaiveDate) -> Result<Option<ForecastRecord>> {
        self.grid(grid_id)?;
        let (csv_path, meta_path) = self.forecast_paths(grid_id, day);
        let Some(text) = read_text(&csv_path)? else {
            return Ok(None);
        };
        let origin = csv_path.display().to_string();
        let rows = csvio::read_forecast(&text, &origin)?;
        let meta: ForecastMeta = read_json(&meta_path)?
            .ok_or_else(|| StoreError::schema(&origin, "backend sidecar is missing"))?;
        let start = rows
            .first()
            .map(|r| r.target)
            .unwrap_or_else(|| day_start(day));
        let interval = if !rows.is_empty() && rows.iter().all(|r| r.bounds.is_some()) {
            let b: Vec<(f64, f64, bool)> =
                rows.iter().map(|r| r.bounds.expect("checked")).collect();
            let steps_per_block = HOURS_PER_DAY * meta.resolution.steps_per_hour();
            Some(IntervalSet {
                lower: b.iter().map(|x| x.0).collect(),
                upper: b.iter().map(|x| x.1).collect(),
                calibrated: b.iter().step_by(steps_per_block).map(|x| x.2).collect(),
            })
        } else if rows.iter().any(|r| r.bounds.is_some()) {
            return Err(StoreError::schema(
                origin,
                "intervals present for only some hours",
            ));
        } else {
            None
        };
        Ok(Some(ForecastRecord {
            grid_id: meta.grid_id,
            issue_day: meta.issue_day,
            start,
            resolution: meta.resolution,
            horizon: rows.iter().map(|r| r.yhat).collect(),
            backend: meta.backend,
            interval,
        }))
    }

    /// Issue days with a stored forecast, ascending.
    pub fn forecast_days(&self, grid_id: &str) -> Result<Vec<NaiveDate>> {
        let dir = self.forecast_dir(grid_id);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StoreError::io(dir, e)),
        };
        let mut days: Vec<NaiveDate> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let stem = name.strip_suffix(".csv")?;
                NaiveDate::parse_from_str(stem, "%Y-%m-%d").ok()
            })
            .collect();
        days.sort();
        Ok(days)
    }

    fn ledger_path(&self, grid_id: &str) -> PathBuf {
        self.root.join("ledgers").join(format!("{grid_id}.json"))
    }

    pub fn store_ledger(&self, ledger: &ResidualLedger) -> Result<()> {
        self.grid(&ledger.grid_id)?;
        let lock = self.writer(&ledger.grid_id);
        let _guard = lock.lock().expect("grid writer poisoned");
        write_json(&self.ledger_path(&ledger.grid_id), ledger)
    }

    pub fn load_ledger(&self, grid_id: &str) -> Result<Option<ResidualLedger>> {
        self.grid(grid_id)?;
        read_json(&self.ledger_path(grid_id))
    }

    fn state_path(&self, name: &str) -> PathBuf {
        self.root.join("state").join(format!("{name}.json"))
    }

    /// Small named JSON documents such as the selected model.
    pub fn write_state<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        write_json(&self.state_path(name), value)
    }

    pub fn read_state<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        read_json(&self.state_path(name))
    }
}
