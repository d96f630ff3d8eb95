use std::collections::BTreeMap;

use gridcast_core::series::CarbonSeries;
use gridcast_store::{DataStore, StoreError};

use crate::error::EvalError;

/// Full history of each grid under evaluation.
pub trait SeriesSource: Sync {
    fn grid_ids(&self) -> Vec<String>;
    fn load(&self, grid_id: &str) -> Result<CarbonSeries, EvalError>;
}

/// Series held in memory, keyed by grid id.
#[derive(Debug, Clone, Default)]
pub struct InMemorySource {
    series: BTreeMap<String, CarbonSeries>,
}

impl InMemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: CarbonSeries) {
        self.series.insert(series.grid_id().to_string(), series);
    }
}

impl FromIterator<CarbonSeries> for InMemorySource {
    fn from_iter<I: IntoIterator<Item = CarbonSeries>>(iter: I) -> Self {
        let mut s = Self::new();
        iter.into_iter().for_each(|x| s.insert(x));
        s
    }
}

impl SeriesSource for InMemorySource {
    fn grid_ids(&self) -> Vec<String> {
        self.series.keys().cloned().collect()
    }

    fn load(&self, grid_id: &str) -> Result<CarbonSeries, EvalError> {
        self.series
            .get(grid_id)
            .cloned()
            .ok_or_else(|| EvalError::UnknownGrid(grid_id.to_string()))
    }
}

/// Everything stored for a grid, from its first to its last catalogued day.
impl SeriesSource for DataStore {
    fn grid_ids(&self) -> Vec<String> {
        self.catalog().ids().map(String::from).collect()
    }

    fn load(&self, grid_id: &str) -> Result<CarbonSeries, EvalError> {
        let entry = self.grid(grid_id).map_err(|e| match e {
            StoreError::UnknownGrid(g) => EvalError::UnknownGrid(g),
            other => EvalError::Source(other.to_string()),
        })?;
        let (Some(first), Some(last)) = (entry.first_day, entry.last_day) else {
            return CarbonSeries::new(
                grid_id,
                chrono::DateTime::UNIX_EPOCH,
                entry.resolution,
                Vec::new(),
            )
            .map_err(|e| EvalError::Source(e.to_string()));
        };
        self.load_actuals(grid_id, first, last)
            .map_err(|e| EvalError::Source(e.to_string()))
    }
}

/// A base source with extra series layered on top; the overlay wins.
pub struct Layered<'a> {
    pub base: &'a dyn SeriesSource,
    pub overlay: InMemorySource,
}

impl SeriesSource for Layered<'_> {
    fn grid_ids(&self) -> Vec<String> {
        let mut ids = self.base.grid_ids();
        ids.extend(self.overlay.grid_ids());
        ids.sort();
        ids.dedup();
        ids
    }

    fn load(&self, grid_id: &str) -> Result<CarbonSeries, EvalError> {
        self.overlay
            .load(grid_id)
            .or_else(|_| self.base.load(grid_id))
    }
}
