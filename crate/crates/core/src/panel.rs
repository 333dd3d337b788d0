//! Panel data model and event alignment.
//!
//! A [`Panel`] holds one daily series per unit on its own calendar. Alignment
//! re-indexes every unit relative to the day its cumulative outcome first
//! reaches a threshold ("Day 0"), producing the common N x T observation
//! matrix the engine consumes.

use std::collections::HashSet;
use std::fmt;

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("series for unit `{0}` is empty")]
    EmptySeries(String),
    #[error("series for unit `{unit}` has {values} values but {mask} mask entries")]
    LengthMismatch { unit: String, values: usize, mask: usize },
    #[error("duplicate unit id `{0}`")]
    DuplicateUnit(String),
    #[error("invalid alignment spec: {0}")]
    InvalidSpec(String),
    #[error("no unit survived alignment ({excluded} excluded)")]
    EmptyPanelAfterAlignment { excluded: usize },
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
}

/// Why a single unit could not be aligned.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("cumulative total {total} never reaches threshold {threshold}")]
    NeverReachedThreshold { total: f64, threshold: f64 },
    #[error("only {available} days precede Day 0, {required} required")]
    InsufficientPreHistory { available: usize, required: usize },
    #[error("{missing} of the pre-window days are unobserved")]
    IncompletePreWindow { missing: usize },
    #[error("invalid alignment spec: {0}")]
    InvalidSpec(String),
}

impl AlignError {
    pub fn code(&self) -> &'static str {
        match self {
            AlignError::NeverReachedThreshold { .. } => "never_reached_threshold",
            AlignError::InsufficientPreHistory { .. } => "insufficient_pre_history",
            AlignError::IncompletePreWindow { .. } => "incomplete_pre_window",
            AlignError::InvalidSpec(_) => "invalid_spec",
        }
    }
}

/// One unit's daily observations. `observed[i] == false` marks a missing day;
/// the stored value at a missing index is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSeries {
    unit_id: String,
    calendar_start: NaiveDate,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl UnitSeries {
    pub fn new(
        unit_id: impl Into<String>,
        calendar_start: NaiveDate,
        values: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self, PanelError> {
        let unit_id = unit_id.into();
        if values.is_empty() {
            return Err(PanelError::EmptySeries(unit_id));
        }
        if values.len() != observed.len() {
            return Err(PanelError::LengthMismatch {
                unit: unit_id,
                values: values.len(),
                mask: observed.len(),
            });
        }
        Ok(Self {
            unit_id,
            calendar_start,
            values,
            observed,
        })
    }

    /// A series with every day observed.
    pub fn dense(
        unit_id: impl Into<String>,
        calendar_start: NaiveDate,
        values: Vec<f64>,
    ) -> Result<Self, PanelError> {
        let observed = vec![true; values.len()];
        Self::new(unit_id, calendar_start, values, observed)
    }

    pub fn unit_id(&self) -> &str {
        &self.unit_id
    }

    pub fn calendar_start(&self) -> NaiveDate {
        self.calendar_start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.calendar_start + Duration::days(index as i64)
    }

    /// Index of `date` within the series, if it falls inside it.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.calendar_start).num_days();
        if offset < 0 || offset as usize >= self.values.len() {
            None
        } else {
            Some(offset as usize)
        }
    }

    /// Value at `index` if that day is observed.
    pub fn get(&self, index: usize) -> Option<f64> {
        match self.observed.get(index) {
            Some(true) => Some(self.values[index]),
            _ => None,
        }
    }

    /// Centered 3-day moving average over observed neighbours. Missing days
    /// stay missing; the ends average over the two available days.
    pub fn smoothed(&self) -> UnitSeries {
        let n = self.values.len();
        let values = (0..n)
            .map(|i| {
                if !self.observed[i] {
                    return self.values[i];
                }
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                let (sum, count) = (lo..=hi)
                    .filter_map(|j| self.get(j))
                    .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                sum / count as f64
            })
            .collect();
        UnitSeries {
            unit_id: self.unit_id.clone(),
            calendar_start: self.calendar_start,
            values,
            observed: self.observed.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    outcome_name: String,
    units: Vec<UnitSeries>,
}

impl Panel {
    pub fn new(outcome_name: impl Into<String>, units: Vec<UnitSeries>) -> Result<Self, PanelError> {
        let mut seen = HashSet::new();
        for unit in &units {
            if !seen.insert(unit.unit_id.as_str()) {
                return Err(PanelError::DuplicateUnit(unit.unit_id.clone()));
            }
        }
        Ok(Self {
            outcome_name: outcome_name.into(),
            units,
        })
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn units(&self) -> &[UnitSeries] {
        &self.units
    }

    pub fn unit(&self, unit_id: &str) -> Option<&UnitSeries> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

fn default_threshold() -> f64 {
    80.0
}

fn default_pre_window() -> usize {
    20
}

fn default_post_window() -> usize {
    15
}

/// Where Day 0 sits and how many days to keep on either side of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSpec {
    #[serde(default = "default_threshold")]
    pub event_threshold: f64,
    #[serde(default = "default_pre_window")]
    pub pre_window_days: usize,
    #[serde(default = "default_post_window")]
    pub post_window_days: usize,
    /// Apply a centered 3-day moving average before alignment.
    #[serde(default)]
    pub smooth: bool,
}

impl Default for AlignmentSpec {
    fn default() -> Self {
        Self {
            event_threshold: default_threshold(),
            pre_window_days: default_pre_window(),
            post_window_days: default_post_window(),
            smooth: false,
        }
    }
}

impl AlignmentSpec {
    pub fn new(event_threshold: f64, pre_window_days: usize, post_window_days: usize) -> Result<Self, PanelError> {
        let spec = Self {
            event_threshold,
            pre_window_days,
            post_window_days,
            smooth: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PanelError> {
        if !self.event_threshold.is_finite() || self.event_threshold < 0.0 {
            return Err(PanelError::InvalidSpec(format!(
                "event_threshold must be a nonnegative finite number, got {}",
                self.event_threshold
            )));
        }
        if self.pre_window_days == 0 {
            return Err(PanelError::InvalidSpec("pre_window_days must be at least 1".into()));
        }
        if self.post_window_days == 0 {
            return Err(PanelError::InvalidSpec("post_window_days must be at least 1".into()));
        }
        Ok(())
    }

    pub fn total_days(&self) -> usize {
        self.pre_window_days + self.post_window_days
    }

    /// Relative day labels `-T0 ..= T - T0 - 1`.
    pub fn day_labels(&self) -> Vec<i64> {
        let pre = self.pre_window_days as i64;
        (-pre..self.post_window_days as i64).collect()
    }
}

/// One unit re-indexed around its Day 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRow {
    pub unit_id: String,
    /// Index of Day 0 within the source series.
    pub day0_index: usize,
    pub day0_date: NaiveDate,
    /// `pre_window_days + post_window_days` values; NaN where unobserved.
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
}

/// First index at which the running cumulative sum reaches `threshold`.
pub fn day_zero_index(series: &UnitSeries, threshold: f64) -> Result<usize, AlignError> {
    let mut cumulative = 0.0;
    for (i, &v) in series.values.iter().enumerate() {
        if series.observed[i] {
            cumulative += v;
        }
        if cumulative >= threshold {
            return Ok(i);
        }
    }
    Err(AlignError::NeverReachedThreshold {
        total: cumulative,
        threshold,
    })
}

pub fn align_to_event(series: &UnitSeries, spec: &AlignmentSpec) -> Result<AlignedRow, AlignError> {
    spec.validate().map_err(|e| AlignError::InvalidSpec(e.to_string()))?;
    let smoothed;
    let series = if spec.smooth {
        smoothed = series.smoothed();
        &smoothed
    } else {
        series
    };

    let day0 = day_zero_index(series, spec.event_threshold)?;
    if day0 < spec.pre_window_days {
        return Err(AlignError::InsufficientPreHistory {
            available: day0,
            required: spec.pre_window_days,
        });
    }
    let start = day0 - spec.pre_window_days;
    let missing = (start..day0).filter(|&i| !series.observed[i]).count();
    if missing > 0 {
        return Err(AlignError::IncompletePreWindow { missing });
    }

    let mut values = Vec::with_capacity(spec.total_days());
    let mut observed = Vec::with_capacity(spec.total_days());
    for i in start..day0 + spec.post_window_days {
        match series.get(i) {
            Some(v) => {
                values.push(v);
                observed.push(true);
            }
            None => {
                values.push(f64::NAN);
                observed.push(false);
            }
        }
    }

    Ok(AlignedRow {
        unit_id: series.unit_id.clone(),
        day0_index: day0,
        day0_date: series.date_at(day0),
        values,
        observed,
    })
}

/// A unit dropped from the analysis and the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub unit_id: String,
    pub stage: String,
    pub reason: String,
    pub detail: String,
}

impl Exclusion {
    pub fn alignment(unit_id: &str, err: &AlignError) -> Self {
        Self {
            unit_id: unit_id.to_string(),
            stage: "alignment".into(),
            reason: err.code().into(),
            detail: err.to_string(),
        }
    }
}

/// The N x T observation matrix, with Day 0 at column `t0_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    matrix: DMatrix<f64>,
    mask: DMatrix<bool>,
    t0_index: usize,
    unit_ids: Vec<String>,
    day_labels: Vec<i64>,
    day0_dates: Vec<NaiveDate>,
}

impl AlignedPanel {
    pub fn from_rows(rows: Vec<AlignedRow>, spec: &AlignmentSpec) -> Result<Self, PanelError> {
        spec.validate()?;
        let t = spec.total_days();
        let n = rows.len();
        let mut seen = HashSet::new();
        let mut matrix = DMatrix::zeros(n, t);
        let mut mask = DMatrix::from_element(n, t, false);
        for (r, row) in rows.iter().enumerate() {
            if !seen.insert(row.unit_id.as_str()) {
                return Err(PanelError::DuplicateUnit(row.unit_id.clone()));
            }
            if row.values.len() != t || row.observed.len() != t {
                return Err(PanelError::LengthMismatch {
                    unit: row.unit_id.clone(),
                    values: row.values.len(),
                    mask: row.observed.len(),
                });
            }
            for c in 0..t {
                matrix[(r, c)] = row.values[c];
                mask[(r, c)] = row.observed[c];
            }
        }
        Ok(Self {
            matrix,
            mask,
            t0_index: spec.pre_window_days,
            unit_ids: rows.iter().map(|r| r.unit_id.clone()).collect(),
            day_labels: spec.day_labels(),
            day0_dates: rows.iter().map(|r| r.day0_date).collect(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn t0_index(&self) -> usize {
        self.t0_index
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn day_labels(&self) -> &[i64] {
        &self.day_labels
    }

    pub fn day0_dates(&self) -> &[NaiveDate] {
        &self.day0_dates
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_days(&self) -> usize {
        self.day_labels.len()
    }

    pub fn post_days(&self) -> usize {
        self.n_days() - self.t0_index
    }

    pub fn row_index(&self, unit_id: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == unit_id)
    }

    pub fn pre_row(&self, row: usize) -> Vec<f64> {
        (0..self.t0_index).map(|c| self.matrix[(row, c)]).collect()
    }

    /// Post-period cells of `row`, `None` where unobserved.
    pub fn post_row(&self, row: usize) -> Vec<Option<f64>> {
        (self.t0_index..self.n_days())
            .map(|c| self.mask[(row, c)].then(|| self.matrix[(row, c)]))
            .collect()
    }

    /// Every cell of `row`, `None` where unobserved.
    pub fn full_row(&self, row: usize) -> Vec<Option<f64>> {
        (0..self.n_days())
            .map(|c| self.mask[(row, c)].then(|| self.matrix[(row, c)]))
            .collect()
    }

    pub fn post_fully_observed(&self, row: usize) -> bool {
        (self.t0_index..self.n_days()).all(|c| self.mask[(row, c)])
    }

    /// Keep only the listed units, in their current order.
    pub fn retain(&self, keep: &HashSet<&str>) -> AlignedPanel {
        let rows: Vec<usize> = (0..self.n_units())
            .filter(|&r| keep.contains(self.unit_ids[r].as_str()))
            .collect();
        let t = self.n_days();
        AlignedPanel {
            matrix: DMatrix::from_fn(rows.len(), t, |r, c| self.matrix[(rows[r], c)]),
            mask: DMatrix::from_fn(rows.len(), t, |r, c| self.mask[(rows[r], c)]),
            t0_index: self.t0_index,
            unit_ids: rows.iter().map(|&r| self.unit_ids[r].clone()).collect(),
            day_labels: self.day_labels.clone(),
            day0_dates: rows.iter().map(|&r| self.day0_dates[r]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentOutcome {
    pub panel: AlignedPanel,
    pub exclusions: Vec<Exclusion>,
}

/// Align every unit of `panel`; units that fail are reported, not imputed.
pub fn build_aligned_panel(panel: &Panel, spec: &AlignmentSpec) -> Result<AlignmentOutcome, PanelError> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut exclusions = Vec::new();
    for unit in panel.units() {
        match align_to_event(unit, spec) {
            Ok(row) => rows.push(row),
            Err(e) => exclusions.push(Exclusion::alignment(unit.unit_id(), &e)),
        }
    }
    if rows.is_empty() {
        return Err(PanelError::EmptyPanelAfterAlignment {
            excluded: exclusions.len(),
        });
    }
    Ok(AlignmentOutcome {
        panel: AlignedPanel::from_rows(rows, spec)?,
        exclusions,
    })
}

impl fmt::Display for AlignedPanel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} units x {} days (Day 0 at column {})",
            self.n_units(),
            self.n_days(),
            self.t0_index
        )
    }
}
