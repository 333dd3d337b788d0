//! The Synthetic Interventions estimator.
//!
//! For a target unit and an intervention `d`, the donors are the units that
//! actually received `d`. Their pre-period block is denoised and the target's
//! pre-period trajectory is regressed on it (minimum-norm least squares, no
//! intercept, no constraints). The learned weights are then applied to the
//! donors' denoised post-period block to produce the target's trajectory
//! under `d`. A target never serves as its own donor.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bucket::InterventionPartition;
use crate::panel::AlignedPanel;
use crate::svt::{svt, Decomposition, DenoisedBlock, SvtConfig, SvtError};

/// Singular values below this fraction of the largest are treated as zero
/// when solving for weights.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Donor groups smaller than this get a warning attached to the model.
pub const MIN_RECOMMENDED_DONORS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no donors available for intervention `{label}`")]
    EmptyDonorGroup { label: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unit `{0}` has no row in the aligned panel")]
    UnknownUnit(String),
    #[error("no observed post-period data for unit `{0}`")]
    NoObservedPostData(String),
    #[error("every (unit, intervention) pair failed ({failures} failures)")]
    NoSuccessfulPairs { failures: usize },
    #[error(transparent)]
    Svt(#[from] SvtError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::EmptyDonorGroup { .. } => "empty_donor_group",
            EngineError::DimensionMismatch { .. } => "dimension_mismatch",
            EngineError::UnknownUnit(_) => "unknown_unit",
            EngineError::NoObservedPostData(_) => "no_observed_post_data",
            EngineError::NoSuccessfulPairs { .. } => "no_successful_pairs",
            EngineError::Svt(SvtError::NonFiniteInput) => "non_finite_input",
            EngineError::Svt(_) => "svt_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub weights: Vec<f64>,
    pub pre_fit_rmse: f64,
}

/// Minimum-norm solution of `min_w || target - donorsᵀ w ||²`, where each
/// donor is a row of the denoised block.
pub fn fit_weights(target_pre: &[f64], donors: &DenoisedBlock) -> Result<WeightFit, EngineError> {
    let (n_donors, t0) = donors.matrix.shape();
    if n_donors == 0 {
        return Err(EngineError::EmptyDonorGroup { label: String::new() });
    }
    if target_pre.len() != t0 {
        return Err(EngineError::DimensionMismatch {
            expected: t0,
            found: target_pre.len(),
        });
    }
    if t0 == 0 {
        return Err(EngineError::DimensionMismatch { expected: 1, found: 0 });
    }
    if target_pre.iter().any(|v| !v.is_finite()) {
        return Err(SvtError::NonFiniteInput.into());
    }

    let y = DVector::from_column_slice(target_pre);
    let dec = Decomposition::new(&donors.matrix)?;
    let sigma_max = dec.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_RELATIVE_CUTOFF * sigma_max;

    // donorsᵀ = V S Uᵀ, so pinv(donorsᵀ) y = U S⁺ Vᵀ y.
    let projected = &dec.v_t * &y;
    let mut weights = DVector::zeros(n_donors);
    for (i, &s) in dec.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            weights += dec.u.column(i) * (projected[i] / s);
        }
    }

    let fitted = donors.matrix.transpose() * &weights;
    let sse: f64 = (&y - fitted).iter().map(|r| r * r).sum();
    Ok(WeightFit {
        weights: weights.iter().copied().collect(),
        pre_fit_rmse: (sse / t0 as f64).sqrt(),
    })
}

/// Weighted sum of donor rows.
pub fn combine(weights: &[f64], donor_rows: &DMatrix<f64>) -> Result<Vec<f64>, EngineError> {
    if weights.len() != donor_rows.nrows() {
        return Err(EngineError::DimensionMismatch {
            expected: weights.len(),
            found: donor_rows.nrows(),
        });
    }
    let w = DVector::from_column_slice(weights);
    Ok((donor_rows.transpose() * w).iter().copied().collect())
}

/// One learned synthetic-target model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiModel {
    pub target_id: String,
    pub label: String,
    pub donor_ids: Vec<String>,
    pub weights: Vec<f64>,
    pub pre_fit_rmse: f64,
    pub rank_pre: usize,
    pub rank_post: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn predict_counterfactual(model: &SiModel, donor_post: &DenoisedBlock) -> Result<Vec<f64>, EngineError> {
    combine(&model.weights, &donor_post.matrix)
}

/// Donors ranked by descending absolute weight; ties keep donor order.
pub fn top_donors(model: &SiModel, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = model
        .donor_ids
        .iter()
        .cloned()
        .zip(model.weights.iter().copied())
        .collect();
    ranked.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap_or(std::cmp::Ordering::Equal));
    ranked.truncate(k);
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualEntry {
    pub unit_id: String,
    pub label: String,
    pub trajectory: Vec<f64>,
    pub model: SiModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub unit_id: String,
    pub label: String,
    pub reason: String,
    pub detail: String,
}

/// A donor-group member left out of the donor pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonorExclusion {
    pub unit_id: String,
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualSet {
    pub units: Vec<String>,
    pub labels: Vec<String>,
    pub post_day_labels: Vec<i64>,
    /// Ordered by (unit, label) in panel and restrictiveness order.
    pub entries: Vec<CounterfactualEntry>,
    pub observed: BTreeMap<String, Vec<Option<f64>>>,
    pub own_label: BTreeMap<String, String>,
    pub failures: Vec<PairFailure>,
    pub donor_exclusions: Vec<DonorExclusion>,
}

impl CounterfactualSet {
    pub fn entry(&self, unit: &str, label: &str) -> Option<&CounterfactualEntry> {
        self.entries.iter().find(|e| e.unit_id == unit && e.label == label)
    }

    pub fn entries_for<'a>(&'a self, unit: &'a str) -> impl Iterator<Item = &'a CounterfactualEntry> + 'a {
        self.entries.iter().filter(move |e| e.unit_id == unit)
    }
}

struct DonorBlocks {
    ids: Vec<String>,
    pre: DenoisedBlock,
    post: DenoisedBlock,
}

fn rows_of(matrix: &DMatrix<f64>, rows: &[usize], cols: std::ops::Range<usize>) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| matrix[(rows[r], cols.start + c)])
}

fn denoise_donors(
    aligned: &AlignedPanel,
    donors: &[(String, usize)],
    config: &SvtConfig,
) -> Result<DonorBlocks, EngineError> {
    let rows: Vec<usize> = donors.iter().map(|(_, r)| *r).collect();
    let t0 = aligned.t0_index();
    let pre = svt(&rows_of(aligned.matrix(), &rows, 0..t0), config)?;
    let post = svt(&rows_of(aligned.matrix(), &rows, t0..aligned.n_days()), config)?;
    Ok(DonorBlocks {
        ids: donors.iter().map(|(id, _)| id.clone()).collect(),
        pre,
        post,
    })
}

/// Predict every unit's post-period trajectory under every intervention.
///
/// Donor pools hold the members of each group whose post-period is fully
/// observed. Per-pair failures are collected in `failures`; the call only
/// fails when no pair succeeds.
pub fn run_si(
    aligned: &AlignedPanel,
    partition: &InterventionPartition,
    config: &SvtConfig,
) -> Result<CounterfactualSet, EngineError> {
    config.validate()?;
    for unit in partition.assignment().keys() {
        if aligned.row_index(unit).is_none() {
            return Err(EngineError::UnknownUnit(unit.clone()));
        }
    }
    let t0 = aligned.t0_index();

    let mut donor_exclusions = Vec::new();
    let mut pools: BTreeMap<&str, Vec<(String, usize)>> = BTreeMap::new();
    for label in partition.labels() {
        let mut pool = Vec::new();
        for unit in partition.group(label) {
            let row = aligned.row_index(unit).expect("checked above");
            if aligned.post_fully_observed(row) {
                pool.push((unit.clone(), row));
            } else {
                donor_exclusions.push(DonorExclusion {
                    unit_id: unit.clone(),
                    label: label.clone(),
                    reason: "incomplete_post_period".into(),
                });
            }
        }
        pools.insert(label.as_str(), pool);
    }

    // Full-pool blocks are shared by every target outside the pool.
    let mut shared: BTreeMap<&str, Result<DonorBlocks, EngineError>> = BTreeMap::new();

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (row, unit) in aligned.unit_ids().iter().enumerate() {
        let target_pre = aligned.pre_row(row);
        for label in partition.labels() {
            let pool = &pools[label.as_str()];
            let in_pool = pool.iter().any(|(id, _)| id == unit);
            let result = if pool.is_empty() || (in_pool && pool.len() == 1) {
                Err(EngineError::EmptyDonorGroup { label: label.clone() })
            } else if in_pool {
                let donors: Vec<(String, usize)> = pool.iter().filter(|(id, _)| id != unit).cloned().collect();
                denoise_donors(aligned, &donors, config)
                    .and_then(|blocks| fit_pair(unit, label, &target_pre, &blocks))
            } else {
                let blocks = shared
                    .entry(label.as_str())
                    .or_insert_with(|| denoise_donors(aligned, pool, config));
                match blocks {
                    Ok(blocks) => fit_pair(unit, label, &target_pre, blocks),
                    Err(e) => Err(e.clone()),
                }
            };
            match result {
                Ok(entry) => entries.push(entry),
                Err(e) => failures.push(PairFailure {
                    unit_id: unit.clone(),
                    label: label.clone(),
                    reason: e.code().into(),
                    detail: e.to_string(),
                }),
            }
        }
    }

    if entries.is_empty() {
        return Err(EngineError::NoSuccessfulPairs {
            failures: failures.len(),
        });
    }

    let observed = aligned
        .unit_ids()
        .iter()
        .enumerate()
        .map(|(row, id)| (id.clone(), aligned.post_row(row)))
        .collect();

    Ok(CounterfactualSet {
        units: aligned.unit_ids().to_vec(),
        labels: partition.labels().to_vec(),
        post_day_labels: aligned.day_labels()[t0..].to_vec(),
        entries,
        observed,
        own_label: partition.assignment().clone(),
        failures,
        donor_exclusions,
    })
}

fn fit_pair(unit: &str, label: &str, target_pre: &[f64], blocks: &DonorBlocks) -> Result<CounterfactualEntry, EngineError> {
    let fit = fit_weights(target_pre, &blocks.pre)?;
    let mut warnings = Vec::new();
    if blocks.ids.len() < MIN_RECOMMENDED_DONORS {
        warnings.push(format!(
            "only {} donors (fewer than {MIN_RECOMMENDED_DONORS} recommended)",
            blocks.ids.len()
        ));
    }
    let model = SiModel {
        target_id: unit.to_string(),
        label: label.to_string(),
        donor_ids: blocks.ids.clone(),
        weights: fit.weights,
        pre_fit_rmse: fit.pre_fit_rmse,
        rank_pre: blocks.pre.rank_used,
        rank_post: blocks.post.rank_used,
        warnings,
    };
    let trajectory = predict_counterfactual(&model, &blocks.post)?;
    Ok(CounterfactualEntry {
        unit_id: unit.to_string(),
        label: label.to_string(),
        trajectory,
        model,
    })
}

/// Fit of a predicted trajectory against the observed one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub rmse: f64,
    /// Mean absolute percentage error as a fraction, over nonzero observations.
    pub mape: Option<f64>,
    /// Undefined when the observations are constant and the fit is not exact.
    pub r2: Option<f64>,
    pub observed_days: usize,
}

pub fn validation_metrics(unit: &str, predicted: &[f64], observed: &[Option<f64>]) -> Result<ValidationMetrics, EngineError> {
    if predicted.len() != observed.len() {
        return Err(EngineError::DimensionMismatch {
            expected: observed.len(),
            found: predicted.len(),
        });
    }
    let pairs: Vec<(f64, f64)> = predicted
        .iter()
        .zip(observed)
        .filter_map(|(&p, o)| o.map(|o| (p, o)))
        .collect();
    if pairs.is_empty() {
        return Err(EngineError::NoObservedPostData(unit.to_string()));
    }
    let n = pairs.len() as f64;
    let sse: f64 = pairs.iter().map(|(p, o)| (p - o).powi(2)).sum();
    let mean = pairs.iter().map(|(_, o)| o).sum::<f64>() / n;
    let sst: f64 = pairs.iter().map(|(_, o)| (o - mean).powi(2)).sum();
    let pct: Vec<f64> = pairs
        .iter()
        .filter(|(_, o)| *o != 0.0)
        .map(|(p, o)| ((p - o) / o).abs())
        .collect();
    let r2 = if sst > 0.0 {
        Some(1.0 - sse / sst)
    } else if sse == 0.0 {
        Some(1.0)
    } else {
        None
    };
    Ok(ValidationMetrics {
        rmse: (sse / n).sqrt(),
        mape: (!pct.is_empty()).then(|| pct.iter().sum::<f64>() / pct.len() as f64),
        r2,
        observed_days: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitValidation {
    pub unit_id: String,
    pub label: String,
    pub metrics: Option<ValidationMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Compare each unit's prediction under its own intervention with what was
/// actually observed.
pub fn self_validation(cf: &CounterfactualSet) -> Vec<UnitValidation> {
    cf.units
        .iter()
        .filter_map(|unit| {
            let label = cf.own_label.get(unit)?;
            let outcome = match cf.entry(unit, label) {
                Some(entry) => validation_metrics(unit, &entry.trajectory, &cf.observed[unit]).map_err(|e| e.code().to_string()),
                None => Err("no_own_intervention_entry".to_string()),
            };
            Some(UnitValidation {
                unit_id: unit.clone(),
                label: label.clone(),
                metrics: outcome.as_ref().ok().copied(),
                error: outcome.err(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{AlignedRow, AlignmentSpec};
    use chrono::NaiveDate;

    fn block(rows: usize, cols: usize, data: &[f64]) -> DenoisedBlock {
        DenoisedBlock::identity(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    fn model(weights: &[f64]) -> SiModel {
        SiModel {
            target_id: "t".into(),
            label: "d".into(),
            donor_ids: (1..=weights.len()).map(|i| format!("donor{i}")).collect(),
            weights: weights.to_vec(),
            pre_fit_rmse: 0.0,
            rank_pre: 1,
            rank_post: 1,
            warnings: vec![],
        }
    }

    #[test]
    fn scalar_multiple() {
        let fit = fit_weights(&[2.0, 4.0, 6.0], &block(1, 3, &[1.0, 2.0, 3.0])).unwrap();
        assert!((fit.weights[0] - 2.0).abs() < 1e-12);
        assert!(fit.pre_fit_rmse < 1e-12);
    }

    #[test]
    fn orthonormal_donors() {
        let fit = fit_weights(&[3.0, 5.0], &block(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((fit.weights[0] - 3.0).abs() < 1e-12);
        assert!((fit.weights[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_donors_get_min_norm_split() {
        let fit = fit_weights(&[2.0, 2.0], &block(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!((fit.weights[0] - 1.0).abs() < 1e-12);
        assert!((fit.weights[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let err = fit_weights(&[1.0, 2.0], &block(1, 3, &[1.0, 2.0, 3.0])).unwrap_err();
        assert_eq!(err, EngineError::DimensionMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn prediction_is_weighted_sum() {
        let post = block(2, 2, &[2.0, 4.0, 4.0, 8.0]);
        assert_eq!(predict_counterfactual(&model(&[0.5, 0.5]), &post).unwrap(), vec![3.0, 6.0]);
        let single = block(1, 3, &[1.5, -2.0, 7.0]);
        assert_eq!(predict_counterfactual(&model(&[1.0]), &single).unwrap(), vec![1.5, -2.0, 7.0]);
        assert!(predict_counterfactual(&model(&[1.0, 2.0, 3.0]), &post).is_err());
    }

    #[test]
    fn top_donor_ordering() {
        let top = top_donors(&model(&[0.1, -0.5, 0.3]), 2);
        assert_eq!(top, vec![("donor2".to_string(), -0.5), ("donor3".to_string(), 0.3)]);
        let tied = top_donors(&model(&[0.2, 0.2]), 4);
        assert_eq!(tied, vec![("donor1".to_string(), 0.2), ("donor2".to_string(), 0.2)]);
    }

    #[test]
    fn metrics_by_hand() {
        let obs = vec![Some(10.0); 5];
        let m = validation_metrics("u", &[10.0; 5], &obs).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.r2, Some(1.0));
        let m = validation_metrics("u", &[11.0; 5], &obs).unwrap();
        assert!((m.rmse - 1.0).abs() < 1e-15);
        assert!((m.mape.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(m.r2, None);

        let obs = vec![Some(1.0), Some(3.0), None];
        let m = validation_metrics("u", &[1.0, 3.0, 100.0], &obs).unwrap();
        assert_eq!(m.observed_days, 2);
        assert_eq!(m.r2, Some(1.0));

        assert_eq!(
            validation_metrics("u", &[1.0], &[None]),
            Err(EngineError::NoObservedPostData("u".into()))
        );
    }

    fn panel(rows: &[(&str, Vec<f64>)], pre: usize) -> AlignedPanel {
        let spec = AlignmentSpec::new(0.0, pre, rows[0].1.len() - pre).unwrap();
        let rows = rows
            .iter()
            .map(|(id, v)| AlignedRow {
                unit_id: id.to_string(),
                day0_index: pre,
                day0_date: NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
                observed: v.iter().map(|x| x.is_finite()).collect(),
                values: v.clone(),
            })
            .collect();
        AlignedPanel::from_rows(rows, &spec).unwrap()
    }

    #[test]
    fn counts_pairs_and_leaves_target_out() {
        let rows: Vec<(String, Vec<f64>)> = (0..6)
            .map(|i| {
                let a = 1.0 + i as f64;
                (format!("u{i}"), vec![a, 2.0 * a, 3.0 * a, a * (1.0 + (i % 2) as f64)])
            })
            .collect();
        let refs: Vec<(&str, Vec<f64>)> = rows.iter().map(|(id, v)| (id.as_str(), v.clone())).collect();
        let aligned = panel(&refs, 3);
        let partition = InterventionPartition::from_assignments(
            vec!["a".into(), "b".into()],
            (0..6).map(|i| (format!("u{i}"), if i < 3 { "a" } else { "b" })),
        )
        .unwrap();
        let cf = run_si(&aligned, &partition, &SvtConfig::fixed(1)).unwrap();
        assert_eq!(cf.entries.len(), 12);
        assert!(cf.failures.is_empty());
        for e in &cf.entries {
            assert!(!e.model.donor_ids.contains(&e.unit_id));
            assert_eq!(e.model.warnings.len(), 1);
        }
        assert_eq!(cf.entry("u0", "a").unwrap().model.donor_ids, vec!["u1", "u2"]);
        assert_eq!(cf.entry("u0", "b").unwrap().model.donor_ids, vec!["u3", "u4", "u5"]);
    }

    #[test]
    fn singleton_group_targeting_itself_fails_softly() {
        let aligned = panel(
            &[
                ("x", vec![1.0, 2.0, 3.0]),
                ("y", vec![2.0, 4.0, 6.0]),
                ("z", vec![3.0, 6.0, 9.0]),
            ],
            2,
        );
        let partition =
            InterventionPartition::from_assignments(vec!["a".into(), "b".into()], [("x", "a"), ("y", "b"), ("z", "b")]).unwrap();
        let cf = run_si(&aligned, &partition, &SvtConfig::fixed(1)).unwrap();
        assert_eq!(cf.entries.len(), 5);
        assert_eq!(cf.failures.len(), 1);
        assert_eq!(cf.failures[0].unit_id, "x");
        assert_eq!(cf.failures[0].label, "a");
        assert_eq!(cf.failures[0].reason, "empty_donor_group");
        let v = self_validation(&cf);
        assert_eq!(v[0].error.as_deref(), Some("no_own_intervention_entry"));
        assert_eq!(v[1].metrics.unwrap().rmse, 0.0);
    }

    #[test]
    fn donors_with_missing_post_are_pooled_out() {
        let aligned = panel(
            &[
                ("x", vec![1.0, 2.0, 3.0]),
                ("y", vec![2.0, 4.0, f64::NAN]),
                ("z", vec![3.0, 6.0, 9.0]),
                ("w", vec![4.0, 8.0, 12.0]),
            ],
            2,
        );
        let partition = InterventionPartition::from_assignments(
            vec!["a".into()],
            [("x", "a"), ("y", "a"), ("z", "a"), ("w", "a")],
        )
        .unwrap();
        let cf = run_si(&aligned, &partition, &SvtConfig::fixed(1)).unwrap();
        assert_eq!(cf.donor_exclusions.len(), 1);
        assert_eq!(cf.donor_exclusions[0].unit_id, "y");
        let y = cf.entry("y", "a").unwrap();
        assert_eq!(y.model.donor_ids, vec!["x", "z", "w"]);
        // y's observed post cell is missing, so it has nothing to validate on.
        let v = self_validation(&cf);
        assert_eq!(v[1].error.as_deref(), Some("no_observed_post_data"));
    }

    #[test]
    fn all_pairs_failing_is_fatal() {
        let aligned = panel(&[("x", vec![1.0, 2.0, 3.0])], 2);
        let partition = InterventionPartition::from_assignments(vec!["a".into()], [("x", "a")]).unwrap();
        assert_eq!(
            run_si(&aligned, &partition, &SvtConfig::default()),
            Err(EngineError::NoSuccessfulPairs { failures: 1 })
        );
    }

    #[test]
    fn partition_unit_without_row_is_rejected() {
        let aligned = panel(&[("x", vec![1.0, 2.0, 3.0])], 2);
        let partition = InterventionPartition::from_assignments(vec!["a".into()], [("x", "a"), ("q", "a")]).unwrap();
        assert_eq!(
            run_si(&aligned, &partition, &SvtConfig::default()),
            Err(EngineError::UnknownUnit("q".into()))
        );
    }
}
