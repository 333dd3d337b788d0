//! Run artifacts and their canonical text form.
//!
//! The canonical form is indented JSON with object keys sorted, scalar
//! arrays kept on one line, and every float written with 17 significant
//! digits in exponent notation, so equal artifacts always produce equal
//! bytes. The content hash is the SHA-256 of that form with the
//! `content_hash` key removed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bucket::InterventionPartition;
use crate::config::RunConfig;
use crate::engine::{DonorExclusion, PairFailure, UnitValidation};
use crate::io::csv::RejectedRow;
use crate::panel::Exclusion;
use crate::projection::{ExpFit, Peak, Projection};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersionMismatch { expected: u32, found: String },
    #[error("content hash mismatch: stored {stored}, computed {computed}")]
    HashMismatch { stored: String, computed: String },
    #[error("artifact contains a non-finite number at {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSummary {
    pub unit_id: String,
    pub day0_date: chrono::NaiveDate,
    pub mobility_score: f64,
    pub mobility_observed_cells: usize,
    pub mobility_total_cells: usize,
    pub low_mobility_coverage: bool,
    /// Aligned observations over every day label; `null` where missing.
    pub observed: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub outcome_name: String,
    pub t0_index: usize,
    pub day_labels: Vec<i64>,
    /// SHA-256 of each input file.
    pub input_digests: BTreeMap<String, String>,
    pub rejected_rows: BTreeMap<String, Vec<RejectedRow>>,
    pub units: Vec<UnitSummary>,
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub unit_id: String,
    pub label: String,
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonorWeight {
    pub unit_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub unit_id: String,
    pub label: String,
    pub donors: Vec<DonorWeight>,
    pub top_donors: Vec<DonorWeight>,
    pub pre_fit_rmse: f64,
    pub rank_pre: usize,
    pub rank_post: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub unit_id: String,
    pub current_label: String,
    pub label: String,
    pub fit: Option<ExpFit>,
    pub projection: Option<Projection>,
    /// Largest value of the counterfactual trajectory itself.
    pub counterfactual_peak: Option<Peak>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub models: Vec<ModelDiagnostics>,
    pub failures: Vec<PairFailure>,
    pub donor_exclusions: Vec<DonorExclusion>,
    pub validation: Vec<UnitValidation>,
    pub projections: Vec<ProjectionRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub config: RunConfig,
    pub panel: PanelSummary,
    pub partition: InterventionPartition,
    pub counterfactuals: Vec<CounterfactualRecord>,
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub content_hash: String,
}

impl RunArtifact {
    /// Compute and store the content hash.
    pub fn seal(mut self) -> Result<Self, ArtifactError> {
        self.content_hash = content_hash(&self)?;
        Ok(self)
    }

    pub fn counterfactuals_for<'a>(&'a self, unit: &'a str) -> impl Iterator<Item = &'a CounterfactualRecord> + 'a {
        self.counterfactuals.iter().filter(move |c| c.unit_id == unit)
    }

    pub fn unit(&self, unit: &str) -> Option<&UnitSummary> {
        self.panel.units.iter().find(|u| u.unit_id == unit)
    }
}

fn hashable_value(artifact: &RunArtifact) -> Result<Value, ArtifactError> {
    let mut value = serde_json::to_value(artifact)?;
    if let Value::Object(map) = &mut value {
        map.remove("content_hash");
    }
    Ok(value)
}

pub fn content_hash(artifact: &RunArtifact) -> Result<String, ArtifactError> {
    let bytes = canonical_bytes(&hashable_value(artifact)?)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Canonical bytes of a sealed artifact.
pub fn write_run(artifact: &RunArtifact) -> Result<Vec<u8>, ArtifactError> {
    canonical_bytes(&serde_json::to_value(artifact)?)
}

/// Parse an artifact, checking its schema version and content hash.
pub fn read_run(bytes: &[u8]) -> Result<RunArtifact, ArtifactError> {
    let value: Value = serde_json::from_slice(bytes)?;
    let found = value.get("schema_version");
    if found.and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
        return Err(ArtifactError::SchemaVersionMismatch {
            expected: SCHEMA_VERSION,
            found: found.map_or("none".into(), Value::to_string),
        });
    }
    let artifact: RunArtifact = serde_json::from_value(value)?;
    let computed = content_hash(&artifact)?;
    if computed != artifact.content_hash {
        return Err(ArtifactError::HashMismatch {
            stored: artifact.content_hash,
            computed,
        });
    }
    Ok(artifact)
}

pub fn canonical_bytes(value: &Value) -> Result<Vec<u8>, ArtifactError> {
    let mut out = String::new();
    write_value(&mut out, value, 0, "$")?;
    out.push('\n');
    Ok(out.into_bytes())
}

fn format_number(n: &Number, path: &str) -> Result<String, ArtifactError> {
    if let Some(u) = n.as_u64() {
        Ok(u.to_string())
    } else if let Some(i) = n.as_i64() {
        Ok(i.to_string())
    } else {
        let f = n.as_f64().expect("json numbers are u64, i64 or f64");
        if !f.is_finite() {
            return Err(ArtifactError::NonFinite(path.to_string()));
        }
        Ok(format!("{f:.16e}"))
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, value: &Value, depth: usize, path: &str) -> Result<(), ArtifactError> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&format_number(n, path)?),
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item, depth, &format!("{path}[{i}]"))?;
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, depth + 1);
                write_value(out, item, depth + 1, &format!("{path}[{i}]"))?;
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => write_object(out, map, depth, path)?,
    }
    Ok(())
}

fn write_object(out: &mut String, map: &Map<String, Value>, depth: usize, path: &str) -> Result<(), ArtifactError> {
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort();
    out.push_str("{\n");
    for (i, key) in keys.iter().enumerate() {
        indent(out, depth + 1);
        let _ = write!(out, "{}: ", serde_json::to_string(key)?);
        write_value(out, &map[*key], depth + 1, &format!("{path}.{key}"))?;
        out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
    }
    indent(out, depth);
    out.push('}');
    Ok(())
}
