//! Intervention buckets: mapping a mobility reduction to a discrete
//! intervention label and grouping units by the label they received.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BucketError {
    #[error("invalid bucket spec: {0}")]
    InvalidSpec(String),
    #[error("unknown bucket preset `{0}` (expected memo3 or paper4)")]
    UnknownPreset(String),
    #[error("unit `{unit}` assigned to unknown label `{label}`")]
    UnknownLabel { unit: String, label: String },
    #[error("unit `{0}` assigned more than once")]
    DuplicateUnit(String),
}

/// Reduction-fraction edges and the labels between them, ordered from least
/// to most restrictive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBucketSpec")]
pub struct BucketSpec {
    edges: Vec<f64>,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct RawBucketSpec {
    edges: Vec<f64>,
    labels: Vec<String>,
}

impl TryFrom<RawBucketSpec> for BucketSpec {
    type Error = BucketError;

    fn try_from(raw: RawBucketSpec) -> Result<Self, Self::Error> {
        BucketSpec::new(raw.edges, raw.labels)
    }
}

impl BucketSpec {
    pub fn new(edges: Vec<f64>, labels: Vec<String>) -> Result<Self, BucketError> {
        if labels.len() != edges.len() + 1 {
            return Err(BucketError::InvalidSpec(format!(
                "{} edges need {} labels, got {}",
                edges.len(),
                edges.len() + 1,
                labels.len()
            )));
        }
        if let Some(e) = edges.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(BucketError::InvalidSpec(format!("edge {e} outside (0, 1)")));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BucketError::InvalidSpec("edges must be strictly increasing".into()));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(BucketError::InvalidSpec("labels must be nonempty".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(BucketError::InvalidSpec(format!("duplicate label `{label}`")));
            }
        }
        Ok(Self { edges, labels })
    }

    /// Three levels split at 10% and 40% reduction.
    pub fn memo3() -> Self {
        Self::new(
            vec![0.10, 0.40],
            vec!["low".into(), "moderate".into(), "severe".into()],
        )
        .expect("preset is valid")
    }

    /// Four levels split at 5%, 30% and 50% reduction.
    pub fn paper4() -> Self {
        Self::new(
            vec![0.05, 0.30, 0.50],
            vec![
                "none".into(),
                "moderate".into(),
                "strict".into(),
                "very_strict".into(),
            ],
        )
        .expect("preset is valid")
    }

    pub fn preset(name: &str) -> Result<Self, BucketError> {
        match name {
            "memo3" => Ok(Self::memo3()),
            "paper4" => Ok(Self::paper4()),
            other => Err(BucketError::UnknownPreset(other.to_string())),
        }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Bucket index for a mobility score (negative = reduction). Intervals
    /// are half-open `[lo, hi)`; increases in mobility count as zero reduction.
    pub fn bucket_index(&self, score: f64) -> usize {
        let reduction = (-score).max(0.0);
        self.edges.iter().take_while(|&&e| reduction >= e).count()
    }

    pub fn label_for(&self, score: f64) -> &str {
        &self.labels[self.bucket_index(score)]
    }
}

/// Which units received which intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPartition {
    /// Every label the spec defines, least to most restrictive.
    labels: Vec<String>,
    assignment: BTreeMap<String, String>,
    /// Units per label in input order; only labels with at least one unit.
    groups: BTreeMap<String, Vec<String>>,
}

impl InterventionPartition {
    /// Build from `(unit, label)` pairs in unit order.
    pub fn from_assignments<I, U, L>(labels: Vec<String>, pairs: I) -> Result<Self, BucketError>
    where
        I: IntoIterator<Item = (U, L)>,
        U: Into<String>,
        L: Into<String>,
    {
        let mut assignment = BTreeMap::new();
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (unit, label) in pairs {
            let (unit, label) = (unit.into(), label.into());
            if !labels.contains(&label) {
                return Err(BucketError::UnknownLabel { unit, label });
            }
            if assignment.insert(unit.clone(), label.clone()).is_some() {
                return Err(BucketError::DuplicateUnit(unit));
            }
            groups.entry(label).or_default().push(unit);
        }
        Ok(Self {
            labels,
            assignment,
            groups,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn assignment(&self) -> &BTreeMap<String, String> {
        &self.assignment
    }

    pub fn groups(&self) -> &BTreeMap<String, Vec<String>> {
        &self.groups
    }

    pub fn label_of(&self, unit: &str) -> Option<&str> {
        self.assignment.get(unit).map(String::as_str)
    }

    pub fn group(&self, label: &str) -> &[String] {
        self.groups.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Position of `label` in restrictiveness order.
    pub fn rank_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Labels strictly less restrictive than `label`, nearest first.
    pub fn less_restrictive_than(&self, label: &str) -> Vec<&str> {
        match self.rank_of(label) {
            Some(rank) => self.labels[..rank].iter().rev().map(String::as_str).collect(),
            None => Vec::new(),
        }
    }
}

/// Assign each scored unit to its bucket. Units keep the given order inside
/// each group.
pub fn bucket_interventions<S: AsRef<str>>(scores: &[(S, f64)], spec: &BucketSpec) -> InterventionPartition {
    let mut assignment = BTreeMap::new();
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (unit, score) in scores {
        let unit = unit.as_ref().to_string();
        let label = spec.label_for(*score).to_string();
        if assignment.insert(unit.clone(), label.clone()).is_none() {
            groups.entry(label).or_default().push(unit);
        }
    }
    InterventionPartition {
        labels: spec.labels().to_vec(),
        assignment,
        groups,
    }
}
