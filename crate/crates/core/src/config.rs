use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bucket::{BucketError, BucketSpec};
use crate::mobility::{MobilityError, MobilityScoreSpec};
use crate::panel::{AlignmentSpec, PanelError};
use crate::projection::DEFAULT_HORIZON_DAYS;
use crate::svt::{SvtConfig, SvtError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("exactly one of `bucket_preset` and `buckets` must be set")]
    BucketSource,
    #[error(transparent)]
    Bucket(#[from] BucketError),
    #[error(transparent)]
    Alignment(#[from] PanelError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Svt(#[from] SvtError),
    #[error("{0} must be at least 1")]
    NotPositive(&'static str),
    #[error("input file not found: {0}")]
    MissingInput(PathBuf),
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON_DAYS
}

fn default_top_donors() -> usize {
    4
}

/// Everything a run needs. Relative input paths resolve against a base
/// directory chosen by the caller (the config file's directory on the CLI).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub deaths: String,
    pub mobility: String,
    #[serde(default)]
    pub alignment: AlignmentSpec,
    #[serde(default)]
    pub mobility_score: MobilityScoreSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket_preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buckets: Option<BucketSpec>,
    #[serde(default)]
    pub svt: SvtConfig,
    #[serde(default = "default_horizon")]
    pub projection_horizon: usize,
    #[serde(default = "default_top_donors")]
    pub top_donors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl RunConfig {
    pub fn with_preset(deaths: impl Into<String>, mobility: impl Into<String>, preset: &str) -> Self {
        Self {
            deaths: deaths.into(),
            mobility: mobility.into(),
            alignment: AlignmentSpec::default(),
            mobility_score: MobilityScoreSpec::default(),
            bucket_preset: Some(preset.to_string()),
            buckets: None,
            svt: SvtConfig::default(),
            projection_horizon: DEFAULT_HORIZON_DAYS,
            top_donors: default_top_donors(),
            output: None,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_slice(bytes)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&bytes)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bucket_spec()?;
        self.alignment.validate()?;
        self.mobility_score.validate()?;
        self.svt.validate()?;
        if self.projection_horizon == 0 {
            return Err(ConfigError::NotPositive("projection_horizon"));
        }
        if self.top_donors == 0 {
            return Err(ConfigError::NotPositive("top_donors"));
        }
        Ok(())
    }

    pub fn bucket_spec(&self) -> Result<BucketSpec, ConfigError> {
        match (&self.bucket_preset, &self.buckets) {
            (Some(name), None) => Ok(BucketSpec::preset(name)?),
            (None, Some(spec)) => Ok(spec.clone()),
            _ => Err(ConfigError::BucketSource),
        }
    }

    /// Input paths resolved against `base`, checked to exist.
    pub fn resolve_inputs(&self, base: &Path) -> Result<(PathBuf, PathBuf), ConfigError> {
        let resolve = |p: &str| {
            let path = base.join(p);
            if path.is_file() {
                Ok(path)
            } else {
                Err(ConfigError::MissingInput(path))
            }
        };
        Ok((resolve(&self.deaths)?, resolve(&self.mobility)?))
    }

    /// The config as recorded in an artifact: no output location.
    pub fn echo(&self) -> RunConfig {
        RunConfig {
            output: None,
            ..self.clone()
        }
    }
}
