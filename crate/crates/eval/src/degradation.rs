//! Accuracy loss at longer horizons relative to the first forecast day.

use std::collections::BTreeMap;

use gridcast_core::conformal::HOURS_PER_DAY;
use gridcast_core::metrics::{EvalReport, Protocol};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub lookback_days: usize,
    /// Mean MAPE of horizon day 1.
    pub base_mape: Option<f64>,
    /// `drops[k - 1] = MAPE(Dk) - MAPE(D1)`, so the first entry is 0.
    pub drops: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationTable {
    pub grid_id: String,
    pub backend: String,
    pub horizon_days: usize,
    /// Sorted by lookback.
    pub rows: Vec<DegradationRow>,
}

/// Groups extended-horizon reports by grid and backend, one row per
/// lookback. Other protocols are ignored.
pub fn degradation_table(reports: &[EvalReport]) -> Vec<DegradationTable> {
    let mut groups: BTreeMap<(String, String), Vec<&EvalReport>> = BTreeMap::new();
    for r in reports
        .iter()
        .filter(|r| r.protocol == Protocol::ForecastExtended)
    {
        groups
            .entry((r.grid_id.clone(), r.config.backend.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((grid_id, backend), rs)| {
            let mut rows: Vec<DegradationRow> = rs
                .iter()
                .map(|r| {
                    let base = r.mape_by_day.first().copied().flatten();
                    DegradationRow {
                        lookback_days: r.config.lookback_hours.unwrap_or(0) / HOURS_PER_DAY,
                        base_mape: base,
                        drops: r.mape_by_day.iter().map(|m| Some((*m)? - base?)).collect(),
                    }
                })
                .collect();
            rows.sort_by_key(|r| r.lookback_days);
            let horizon_days = rows.iter().map(|r| r.drops.len()).max().unwrap_or(0);
            DegradationTable {
                grid_id,
                backend,
                horizon_days,
                rows,
            }
        })
        .collect()
}

impl DegradationTable {
    /// Rows labelled `L*24` (lookback in hours), columns `MAPE(D1)` then
    /// `D1..Dn` drops, two decimals.
    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        let mut out = format!("{} ({})\n", self.grid_id, self.backend);
        out.push_str(&format!("{:<8} {:>8}", "lookback", "MAPE(D1)"));
        for k in 1..=self.horizon_days {
            out.push_str(&format!(" {:>6}", format!("D{k}")));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{:<8} {:>8}",
                format!("{}*24", row.lookback_days),
                cell(row.base_mape)
            ));
            for k in 0..self.horizon_days {
                out.push_str(&format!(
                    " {:>6}",
                    cell(row.drops.get(k).copied().flatten())
                ));
            }
            out.push('\n');
        }
        out
    }

    pub fn drop_at(&self, lookback_days: usize, day: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.lookback_days == lookback_days)?
            .drops
            .get(day.checked_sub(1)?)
            .copied()
            .flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridcast_core::metrics::ConfigSnapshot;

    fn report(lookback: usize, by_day: Vec<f64>) -> EvalReport {
        let mut r = EvalReport::empty(
            "G",
            Protocol::ForecastExtended,
            ConfigSnapshot {
                backend: "ewma".into(),
                lookback_hours: Some(lookback * 24),
                ..Default::default()
            },
        );
        r.mape_by_day = by_day.into_iter().map(Some).collect();
        r
    }

    #[test]
    fn drops_relative_to_first_day() {
        let t = degradation_table(&[
            report(7, vec![10.0, 12.5, 15.0]),
            report(1, vec![5.0, 5.0, 9.0]),
        ]);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].rows[0].lookback_days, 1);
        assert_eq!(t[0].drop_at(7, 3), Some(5.0));
        assert_eq!(t[0].drop_at(1, 1), Some(0.0));
        let text = t[0].to_text();
        assert!(text.contains("1*24"));
        assert!(text.lines().nth(1).unwrap().ends_with("D3"));
    }
}
