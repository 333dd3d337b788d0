//! End-to-end case-study pipeline: ingest, align, score, bucket, estimate,
//! validate, project, and package the result as a sealed artifact.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bucket::{bucket_interventions, InterventionPartition};
use crate::config::{ConfigError, RunConfig};
use crate::engine::{run_si, self_validation, top_donors, validation_metrics, EngineError, ValidationMetrics};
use crate::io::artifact::{
    ArtifactError, CounterfactualRecord, Diagnostics, DonorWeight, ModelDiagnostics, PanelSummary, ProjectionRecord,
    RunArtifact, UnitSummary, SCHEMA_VERSION,
};
use crate::io::csv::{parse_deaths_csv, parse_mobility_csv, CsvError};
use crate::io::store::{write_atomic, StoreError};
use crate::mobility::{mobility_score, MobilityError};
use crate::panel::{build_aligned_panel, Exclusion, PanelError};
use crate::projection::{fit_exponential, project_peak, Peak, PeakSource};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: CsvError },
    #[error(transparent)]
    Alignment(#[from] PanelError),
    #[error("no aligned unit has mobility data ({excluded} excluded)")]
    NoScoredUnits { excluded: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } | PipelineError::Csv { .. } => "ingest",
            PipelineError::Alignment(_) => "align",
            PipelineError::NoScoredUnits { .. } => "score",
            PipelineError::Engine(_) => "estimate",
            PipelineError::Artifact(_) | PipelineError::Store(_) => "write",
        }
    }
}

fn read_input(path: &Path) -> Result<(Vec<u8>, String), PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = hex::encode(Sha256::digest(&bytes));
    Ok((bytes, digest))
}

/// Run the whole pipeline. Relative input paths resolve against `base_dir`.
pub fn run(config: &RunConfig, base_dir: &Path) -> Result<RunArtifact, PipelineError> {
    config.validate()?;
    let buckets = config.bucket_spec()?;
    let (deaths_path, mobility_path) = config.resolve_inputs(base_dir)?;

    let (deaths_bytes, deaths_digest) = read_input(&deaths_path)?;
    let (mobility_bytes, mobility_digest) = read_input(&mobility_path)?;
    let deaths = parse_deaths_csv(&deaths_bytes).map_err(|source| PipelineError::Csv {
        path: deaths_path.clone(),
        source,
    })?;
    let mobility = parse_mobility_csv(&mobility_bytes).map_err(|source| PipelineError::Csv {
        path: mobility_path.clone(),
        source,
    })?;

    let aligned = build_aligned_panel(&deaths.panel, &config.alignment)?;
    let mut exclusions = aligned.exclusions;

    let mut scores = Vec::new();
    for (row, unit) in aligned.panel.unit_ids().iter().enumerate() {
        let day0 = aligned.panel.day0_dates()[row];
        let result = match mobility.series.get(unit) {
            Some(series) => mobility_score(series, day0, &config.mobility_score),
            None => Err(MobilityError::NoMobilityData {
                start: config.mobility_score.lag_window.0,
                end: config.mobility_score.lag_window.1,
            }),
        };
        match result {
            Ok(score) => scores.push((unit.clone(), row, score)),
            Err(e) => exclusions.push(Exclusion {
                unit_id: unit.clone(),
                stage: "mobility".into(),
                reason: "no_mobility_data".into(),
                detail: e.to_string(),
            }),
        }
    }
    if scores.is_empty() {
        return Err(PipelineError::NoScoredUnits {
            excluded: exclusions.len(),
        });
    }

    let keep: HashSet<&str> = scores.iter().map(|(u, _, _)| u.as_str()).collect();
    let panel = aligned.panel.retain(&keep);
    let unit_scores: Vec<(&str, f64)> = scores.iter().map(|(u, _, s)| (u.as_str(), s.score)).collect();
    let partition = bucket_interventions(&unit_scores, &buckets);

    let cf = run_si(&panel, &partition, &config.svt)?;

    let mut warnings = Vec::new();
    for label in partition.labels() {
        if partition.group(label).is_empty() {
            warnings.push(format!("intervention `{label}` has no units"));
        }
    }
    let units: Vec<UnitSummary> = scores
        .iter()
        .map(|(unit, _, score)| {
            let row = panel.row_index(unit).expect("retained");
            if score.low_coverage() {
                warnings.push(format!(
                    "unit `{unit}` mobility coverage {:.0}% is below 50%",
                    100.0 * score.coverage()
                ));
            }
            UnitSummary {
                unit_id: unit.clone(),
                day0_date: panel.day0_dates()[row],
                mobility_score: score.score,
                mobility_observed_cells: score.observed_cells,
                mobility_total_cells: score.total_cells,
                low_mobility_coverage: score.low_coverage(),
                observed: panel.full_row(row),
            }
        })
        .collect();

    let models = cf
        .entries
        .iter()
        .map(|e| {
            let weights = |pairs: Vec<(String, f64)>| {
                pairs
                    .into_iter()
                    .map(|(unit_id, weight)| DonorWeight { unit_id, weight })
                    .collect()
            };
            ModelDiagnostics {
                unit_id: e.unit_id.clone(),
                label: e.label.clone(),
                donors: weights(e.model.donor_ids.iter().cloned().zip(e.model.weights.iter().copied()).collect()),
                top_donors: weights(top_donors(&e.model, config.top_donors)),
                pre_fit_rmse: e.model.pre_fit_rmse,
                rank_pre: e.model.rank_pre,
                rank_post: e.model.rank_post,
                warnings: e.model.warnings.clone(),
            }
        })
        .collect();
    let counterfactuals: Vec<CounterfactualRecord> = cf
        .entries
        .iter()
        .map(|e| CounterfactualRecord {
            unit_id: e.unit_id.clone(),
            label: e.label.clone(),
            trajectory: e.trajectory.clone(),
        })
        .collect();
    let unit_order: Vec<String> = units.iter().map(|u| u.unit_id.clone()).collect();
    let (projections, projection_warnings) =
        compute_projections(&unit_order, &partition, &counterfactuals, config.projection_horizon);
    warnings.extend(projection_warnings);

    let artifact = RunArtifact {
        schema_version: SCHEMA_VERSION,
        config: config.echo(),
        panel: PanelSummary {
            outcome_name: deaths.panel.outcome_name().to_string(),
            t0_index: panel.t0_index(),
            day_labels: panel.day_labels().to_vec(),
            input_digests: BTreeMap::from([
                ("deaths".to_string(), deaths_digest),
                ("mobility".to_string(), mobility_digest),
            ]),
            rejected_rows: BTreeMap::from([
                ("deaths".to_string(), deaths.rejected),
                ("mobility".to_string(), mobility.rejected),
            ]),
            units,
            exclusions,
        },
        partition,
        counterfactuals,
        diagnostics: Diagnostics {
            models,
            failures: cf.failures.clone(),
            donor_exclusions: cf.donor_exclusions.clone(),
            validation: self_validation(&cf),
            projections,
            warnings,
        },
        content_hash: String::new(),
    };
    Ok(artifact.seal()?)
}

/// Run and write the artifact to `output` atomically.
pub fn run_to_file(config: &RunConfig, base_dir: &Path, output: &Path) -> Result<RunArtifact, PipelineError> {
    let artifact = run(config, base_dir)?;
    let bytes = crate::io::write_run(&artifact)?;
    write_atomic(output, &bytes)?;
    Ok(artifact)
}

/// Exponential projections for every unit under each intervention less
/// restrictive than its own. Units already in the least restrictive bucket
/// produce a warning instead.
pub fn compute_projections(
    units: &[String],
    partition: &InterventionPartition,
    counterfactuals: &[CounterfactualRecord],
    horizon: usize,
) -> (Vec<ProjectionRecord>, Vec<String>) {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for unit in units {
        let Some(current) = partition.label_of(unit) else {
            continue;
        };
        let looser = partition.less_restrictive_than(current);
        if looser.is_empty() {
            warnings.push(format!(
                "unit `{unit}` is already under the least restrictive intervention `{current}`; nothing to project"
            ));
            continue;
        }
        for label in looser {
            let record = ProjectionRecord {
                unit_id: unit.clone(),
                current_label: current.to_string(),
                label: label.to_string(),
                fit: None,
                projection: None,
                counterfactual_peak: None,
                error: None,
            };
            let Some(cf) = counterfactuals.iter().find(|c| &c.unit_id == unit && c.label == label) else {
                records.push(ProjectionRecord {
                    error: Some("no_counterfactual".into()),
                    ..record
                });
                continue;
            };
            let raw_peak = cf
                .trajectory
                .iter()
                .enumerate()
                .fold(None::<Peak>, |best, (day, &value)| match best {
                    Some(b) if b.value >= value => Some(b),
                    _ => Some(Peak {
                        day: day as i64,
                        value,
                        source: PeakSource::Observed,
                    }),
                });
            let outcome = fit_exponential(0, &cf.trajectory)
                .and_then(|fit| project_peak(&fit, 0, &cf.trajectory, horizon).map(|p| (fit, p)));
            records.push(match outcome {
                Ok((fit, projection)) => ProjectionRecord {
                    fit: Some(fit),
                    projection: Some(projection),
                    counterfactual_peak: raw_peak,
                    ..record
                },
                Err(e) => ProjectionRecord {
                    counterfactual_peak: raw_peak,
                    error: Some(e.to_string()),
                    ..record
                },
            });
        }
    }
    (records, warnings)
}

/// One row of the validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub unit_id: String,
    pub label: String,
    pub metrics: Result<ValidationMetrics, String>,
    pub top_donors: Vec<DonorWeight>,
}

/// Validation metrics recomputed from an artifact's trajectories and
/// observations, with each unit's top donors under its own intervention.
pub fn validation_table(artifact: &RunArtifact) -> Vec<ValidationRow> {
    let t0 = artifact.panel.t0_index;
    artifact
        .panel
        .units
        .iter()
        .filter_map(|unit| {
            let label = artifact.partition.label_of(&unit.unit_id)?;
            let observed = &unit.observed[t0..];
            let metrics = match artifact
                .counterfactuals
                .iter()
                .find(|c| c.unit_id == unit.unit_id && c.label == label)
            {
                Some(cf) => validation_metrics(&unit.unit_id, &cf.trajectory, observed).map_err(|e| e.code().to_string()),
                None => Err("no_own_intervention_entry".to_string()),
            };
            let top_donors = artifact
                .diagnostics
                .models
                .iter()
                .find(|m| m.unit_id == unit.unit_id && m.label == label)
                .map(|m| m.top_donors.clone())
                .unwrap_or_default();
            Some(ValidationRow {
                unit_id: unit.unit_id.clone(),
                label: label.to_string(),
                metrics,
                top_donors,
            })
        })
        .collect()
}

/// Headline numbers for a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub units: usize,
    pub excluded: usize,
    pub bucket_sizes: Vec<(String, usize)>,
    pub counterfactuals: usize,
    pub failed_pairs: usize,
    pub median_validation_rmse: Option<f64>,
    pub content_hash: String,
}

impl RunSummary {
    pub fn of(artifact: &RunArtifact) -> Self {
        let mut rmses: Vec<f64> = artifact
            .diagnostics
            .validation
            .iter()
            .filter_map(|v| v.metrics.map(|m| m.rmse))
            .collect();
        rmses.sort_by(|a, b| a.partial_cmp(b).expect("finite rmse"));
        let median = match rmses.len() {
            0 => None,
            n if n % 2 == 1 => Some(rmses[n / 2]),
            n => Some(0.5 * (rmses[n / 2 - 1] + rmses[n / 2])),
        };
        Self {
            units: artifact.panel.units.len(),
            excluded: artifact.panel.exclusions.len(),
            bucket_sizes: artifact
                .partition
                .labels()
                .iter()
                .map(|l| (l.clone(), artifact.partition.group(l).len()))
                .collect(),
            counterfactuals: artifact.counterfactuals.len(),
            failed_pairs: artifact.diagnostics.failures.len(),
            median_validation_rmse: median,
            content_hash: artifact.content_hash.clone(),
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "units:           {} analysed, {} excluded", self.units, self.excluded)?;
        let buckets: Vec<String> = self.bucket_sizes.iter().map(|(l, n)| format!("{l}={n}")).collect();
        writeln!(f, "buckets:         {}", buckets.join(" "))?;
        writeln!(
            f,
            "counterfactuals: {} ({} failed pairs)",
            self.counterfactuals, self.failed_pairs
        )?;
        match self.median_validation_rmse {
            Some(m) => writeln!(f, "median rmse:     {m:.4}")?,
            None => writeln!(f, "median rmse:     n/a")?,
        }
        write!(f, "content hash:    {}", self.content_hash)
    }
}
