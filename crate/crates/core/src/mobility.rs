//! Mobility scores: how far a unit's movement dropped before Day 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::UnitSeries;

/// The six published mobility-report categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityCategory {
    RetailAndRecreation,
    GroceryAndPharmacy,
    Parks,
    TransitStations,
    Workplaces,
    Residential,
}

impl MobilityCategory {
    pub const ALL: [MobilityCategory; 6] = [
        MobilityCategory::RetailAndRecreation,
        MobilityCategory::GroceryAndPharmacy,
        MobilityCategory::Parks,
        MobilityCategory::TransitStations,
        MobilityCategory::Workplaces,
        MobilityCategory::Residential,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MobilityCategory::RetailAndRecreation => "retail_and_recreation",
            MobilityCategory::GroceryAndPharmacy => "grocery_and_pharmacy",
            MobilityCategory::Parks => "parks",
            MobilityCategory::TransitStations => "transit_stations",
            MobilityCategory::Workplaces => "workplaces",
            MobilityCategory::Residential => "residential",
        }
    }
}

impl fmt::Display for MobilityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown mobility category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for MobilityCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        MobilityCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

/// Per-category mobility series for one unit.
pub type MobilitySeries = BTreeMap<MobilityCategory, UnitSeries>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobilityError {
    #[error("no mobility observations in days {start}..={end} relative to Day 0")]
    NoMobilityData { start: i64, end: i64 },
    #[error("invalid mobility score spec: {0}")]
    InvalidSpec(String),
}

fn default_categories() -> BTreeSet<MobilityCategory> {
    [MobilityCategory::RetailAndRecreation, MobilityCategory::TransitStations]
        .into_iter()
        .collect()
}

fn default_lag_window() -> (i64, i64) {
    (-20, -1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityScoreSpec {
    #[serde(default = "default_categories")]
    pub categories: BTreeSet<MobilityCategory>,
    /// Inclusive day range relative to Day 0.
    #[serde(default = "default_lag_window")]
    pub lag_window: (i64, i64),
}

impl Default for MobilityScoreSpec {
    fn default() -> Self {
        Self {
            categories: default_categories(),
            lag_window: default_lag_window(),
        }
    }
}

impl MobilityScoreSpec {
    pub fn validate(&self) -> Result<(), MobilityError> {
        let (start, end) = self.lag_window;
        if self.categories.is_empty() {
            return Err(MobilityError::InvalidSpec("categories must be nonempty".into()));
        }
        if end >= 0 {
            return Err(MobilityError::InvalidSpec(format!(
                "lag window must end before Day 0, got {end}"
            )));
        }
        if start > end {
            return Err(MobilityError::InvalidSpec(format!(
                "lag window start {start} is after end {end}"
            )));
        }
        Ok(())
    }

    fn window_days(&self) -> usize {
        (self.lag_window.1 - self.lag_window.0 + 1) as usize
    }
}

/// Below this fraction of observed (category, day) cells a score is flagged.
pub const LOW_COVERAGE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityScore {
    /// Mean percent change from baseline as a fraction; negative means reduced mobility.
    pub score: f64,
    pub observed_cells: usize,
    pub total_cells: usize,
}

impl MobilityScore {
    pub fn coverage(&self) -> f64 {
        self.observed_cells as f64 / self.total_cells as f64
    }

    pub fn low_coverage(&self) -> bool {
        self.coverage() < LOW_COVERAGE
    }
}

/// Mean of the selected categories' percent changes over the lag window,
/// divided by 100. Missing days and absent categories are skipped.
pub fn mobility_score(
    mobility: &MobilitySeries,
    day0_date: NaiveDate,
    spec: &MobilityScoreSpec,
) -> Result<MobilityScore, MobilityError> {
    spec.validate()?;
    let (start, end) = spec.lag_window;
    let mut sum = 0.0;
    let mut observed_cells = 0usize;
    for category in &spec.categories {
        let Some(series) = mobility.get(category) else {
            continue;
        };
        for offset in start..=end {
            let date = day0_date + Duration::days(offset);
            if let Some(v) = series.index_of(date).and_then(|i| series.get(i)) {
                sum += v;
                observed_cells += 1;
            }
        }
    }
    if observed_cells == 0 {
        return Err(MobilityError::NoMobilityData { start, end });
    }
    Ok(MobilityScore {
        score: sum / observed_cells as f64 / 100.0,
        observed_cells,
        total_cells: spec.categories.len() * spec.window_days(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn constant(cat: MobilityCategory, start: &str, len: usize, v: f64) -> (MobilityCategory, UnitSeries) {
        (cat, UnitSeries::dense("x", day(start), vec![v; len]).unwrap())
    }

    #[test]
    fn mean_of_constant_categories() {
        let m: MobilitySeries = [
            constant(MobilityCategory::RetailAndRecreation, "2020-03-01", 40, -30.0),
            constant(MobilityCategory::TransitStations, "2020-03-01", 40, -50.0),
            constant(MobilityCategory::Parks, "2020-03-01", 40, 80.0),
        ]
        .into_iter()
        .collect();
        let s = mobility_score(&m, day("2020-03-25"), &MobilityScoreSpec::default()).unwrap();
        assert!((s.score - (-0.40)).abs() < 1e-15);
        assert_eq!(s.observed_cells, 40);
        assert_eq!(s.total_cells, 40);
        assert!(!s.low_coverage());
    }

    #[test]
    fn window_without_data_errors() {
        let m: MobilitySeries = [constant(MobilityCategory::RetailAndRecreation, "2020-05-01", 10, -30.0)]
            .into_iter()
            .collect();
        assert_eq!(
            mobility_score(&m, day("2020-03-25"), &MobilityScoreSpec::default()),
            Err(MobilityError::NoMobilityData { start: -20, end: -1 })
        );
    }

    #[test]
    fn partial_coverage_uses_observed_cells_only() {
        // retail covers only the last 5 days of the window, transit is absent.
        let m: MobilitySeries = [constant(MobilityCategory::RetailAndRecreation, "2020-03-20", 10, -20.0)]
            .into_iter()
            .collect();
        let s = mobility_score(&m, day("2020-03-25"), &MobilityScoreSpec::default()).unwrap();
        assert!((s.score + 0.20).abs() < 1e-15);
        assert_eq!(s.observed_cells, 5);
        assert!(s.low_coverage());
    }

    #[test]
    fn category_parsing_trims() {
        assert_eq!("parks ".parse::<MobilityCategory>(), Ok(MobilityCategory::Parks));
        assert!("beaches".parse::<MobilityCategory>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = MobilityScoreSpec::default();
        spec.lag_window = (-5, 0);
        assert!(spec.validate().is_err());
        spec.lag_window = (-1, -5);
        assert!(spec.validate().is_err());
        spec.lag_window = (-5, -1);
        spec.categories.clear();
        assert!(spec.validate().is_err());
    }
}
