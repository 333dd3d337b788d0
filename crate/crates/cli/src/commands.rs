//! Implementations of the `si` subcommands. Each writes its report to the
//! given sink so the binary and the tests share one code path.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use si_core::io::{read_run, RunArtifact};
use si_core::pipeline::{self, compute_projections, validation_table, PipelineError, RunSummary};
use si_core::RunConfig;

/// Where `si run` writes when neither the config nor the flag names a path.
pub const DEFAULT_OUTPUT: &str = "run.json";

fn config_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// `si run`: execute the pipeline and write the artifact. Paths in the
/// config are relative to the config file.
pub fn run(config_path: &Path, output: Option<&Path>, out: &mut impl Write) -> Result<RunArtifact, PipelineError> {
    let config = RunConfig::load(config_path)?;
    let base = config_dir(config_path);
    let output = match (output, &config.output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => base.join(p),
        (None, None) => base.join(DEFAULT_OUTPUT),
    };
    let artifact = pipeline::run_to_file(&config, &base, &output)?;
    let _ = writeln!(out, "{}", RunSummary::of(&artifact));
    let _ = writeln!(out, "artifact:        {}", output.display());
    Ok(artifact)
}

pub fn load_artifact(path: &Path) -> Result<RunArtifact> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    read_run(&bytes).with_context(|| format!("invalid artifact {}", path.display()))
}

fn opt(v: Option<f64>, precision: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.precision$}"))
}

/// `si validate`: per-unit fit of the own-intervention prediction.
pub fn validate(artifact_path: &Path, out: &mut impl Write) -> Result<()> {
    let artifact = load_artifact(artifact_path)?;
    writeln!(
        out,
        "{:<16} {:<12} {:>10} {:>8} {:>8}  top donors",
        "unit", "intervention", "rmse", "mape", "r2"
    )?;
    for row in validation_table(&artifact) {
        let donors: Vec<String> = row
            .top_donors
            .iter()
            .map(|d| format!("{} ({:+.3})", d.unit_id, d.weight))
            .collect();
        match row.metrics {
            Ok(m) => writeln!(
                out,
                "{:<16} {:<12} {:>10.3} {:>8} {:>8}  {}",
                row.unit_id,
                row.label,
                m.rmse,
                opt(m.mape, 3),
                opt(m.r2, 3),
                donors.join(", ")
            )?,
            Err(reason) => writeln!(out, "{:<16} {:<12} {:>10}  ({reason})", row.unit_id, row.label, "-")?,
        }
    }
    Ok(())
}

/// `si project`: exponential projections under each less restrictive
/// intervention. Returns the warnings it printed.
pub fn project(artifact_path: &Path, horizon: usize, out: &mut impl Write, err: &mut impl Write) -> Result<Vec<String>> {
    anyhow::ensure!(horizon >= 1, "horizon must be at least 1 day");
    let artifact = load_artifact(artifact_path)?;
    let units: Vec<String> = artifact.panel.units.iter().map(|u| u.unit_id.clone()).collect();
    let (rows, warnings) = compute_projections(&units, &artifact.partition, &artifact.counterfactuals, horizon);
    writeln!(
        out,
        "{:<16} {:<12} {:<12} {:>10} {:>9} {:>6} {:>12} {:>12}",
        "unit", "current", "scenario", "a", "b", "day", "peak", "cf peak"
    )?;
    for row in &rows {
        let cf_peak = opt(row.counterfactual_peak.map(|p| p.value), 2);
        match (&row.fit, &row.projection) {
            (Some(fit), Some(p)) => writeln!(
                out,
                "{:<16} {:<12} {:<12} {:>10.3} {:>9.4} {:>6} {:>12.2} {:>12}",
                row.unit_id, row.current_label, row.label, fit.a, fit.b, p.projected_peak.day, p.projected_peak.value, cf_peak
            )?,
            _ => writeln!(
                out,
                "{:<16} {:<12} {:<12} ({})",
                row.unit_id,
                row.current_label,
                row.label,
                row.error.as_deref().unwrap_or("no fit")
            )?,
        }
    }
    for w in &warnings {
        writeln!(err, "warning: {w}")?;
    }
    Ok(warnings)
}

/// The single structured line printed for a fatal error.
pub fn error_line(stage: &str, message: &str) -> String {
    serde_json::json!({ "error": { "stage": stage, "message": message } }).to_string()
}
