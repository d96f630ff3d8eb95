use chrono::NaiveDate;
use gridcast_core::series::Resolution;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub grid_id: String,
    pub display_name: String,
    /// Free-form region tag such as `US` or `EU`.
    #[serde(default)]
    pub region: String,
    pub resolution: Resolution,
    /// First and last UTC day with at least one stored value.
    #[serde(default)]
    pub first_day: Option<NaiveDate>,
    #[serde(default)]
    pub last_day: Option<NaiveDate>,
}

impl CatalogEntry {
    pub fn new(grid_id: impl Into<String>, resolution: Resolution) -> Self {
        let grid_id = grid_id.into();
        Self {
            display_name: grid_id.clone(),
            grid_id,
            region: String::new(),
            resolution,
            first_day: None,
            last_day: None,
        }
    }

    pub fn with_display_name(mut self, name: impl Into<String>) -> Self {
        self.display_name = name.into();
        self
    }

    pub fn with_region(mut self, region: impl Into<String>) -> Self {
        self.region = region.into();
        self
    }

    /// Widens the stored-day range to include `first..=last`.
    pub fn extend_range(&mut self, first: NaiveDate, last: NaiveDate) {
        self.first_day = Some(self.first_day.map_or(first, |d| d.min(first)));
        self.last_day = Some(self.last_day.map_or(last, |d| d.max(last)));
    }
}

/// Supported grids, kept sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCatalog {
    pub grids: Vec<CatalogEntry>,
}

impl GridCatalog {
    pub fn get(&self, grid_id: &str) -> Option<&CatalogEntry> {
        self.position(grid_id).ok().map(|i| &self.grids[i])
    }

    pub fn get_mut(&mut self, grid_id: &str) -> Option<&mut CatalogEntry> {
        self.position(grid_id).ok().map(|i| &mut self.grids[i])
    }

    fn position(&self, grid_id: &str) -> Result<usize, usize> {
        self.grids
            .binary_search_by(|e| e.grid_id.as_str().cmp(grid_id))
    }

    /// Inserts or replaces the entry with the same id. A replacement keeps
    /// the union of both stored-day ranges.
    pub fn upsert(&mut self, mut entry: CatalogEntry) {
        match self.position(&entry.grid_id) {
            Ok(i) => {
                let old = &self.grids[i];
                if let (Some(f), Some(l)) = (old.first_day, old.last_day) {
                    entry.extend_range(f, l);
                }
                self.grids[i] = entry;
            }
            Err(i) => self.grids.insert(i, entry),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.grids.iter().map(|e| e.grid_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }
}
