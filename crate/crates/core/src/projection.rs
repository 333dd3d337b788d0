//! Exponential projection of a trajectory and its peak.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HORIZON_DAYS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("need at least 2 strictly positive values to fit, got {0}")]
    InsufficientPositivePoints(usize),
    #[error("horizon must be at least 1 day")]
    EmptyHorizon,
}

/// `y(t) = a * exp(b * t)` fitted by least squares on `ln y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    /// Inclusive day range the fit saw.
    pub fit_window: (i64, i64),
    pub r2_log: f64,
    pub points_used: usize,
    pub points_skipped: usize,
}

impl ExpFit {
    pub fn eval(&self, day: f64) -> f64 {
        self.a * (self.b * day).exp()
    }
}

/// Fit to `values[i]` observed on day `first_day + i`. Nonpositive values
/// are skipped and counted.
pub fn fit_exponential(first_day: i64, values: &[f64]) -> Result<ExpFit, ProjectionError> {
    let points: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(i, &v)| ((first_day + i as i64) as f64, v.ln()))
        .collect();
    if points.len() < 2 {
        return Err(ProjectionError::InsufficientPositivePoints(points.len()));
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|(t, _)| (t - t_mean).powi(2)).sum();
    let sty: f64 = points.iter().map(|(t, y)| (t - t_mean) * (y - y_mean)).sum();
    let b = sty / stt;
    let ln_a = y_mean - b * t_mean;

    let ss_res: f64 = points.iter().map(|(t, y)| (y - ln_a - b * t).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - y_mean).powi(2)).sum();
    let r2_log = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON {
        1.0
    } else {
        0.0
    };

    Ok(ExpFit {
        a: ln_a.exp(),
        b,
        fit_window: (points[0].0 as i64, points[points.len() - 1].0 as i64),
        r2_log,
        points_used: points.len(),
        points_skipped: values.len() - points.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakSource {
    Observed,
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub day: i64,
    pub value: f64,
    pub source: PeakSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub horizon_days: usize,
    /// First day of the projected segment.
    pub first_projected_day: i64,
    pub projected: Vec<f64>,
    /// Maximum over the given trajectory and the projected segment.
    pub projected_peak: Peak,
    /// Maximum of the fitted curve alone over the fit window and horizon.
    pub curve_peak: Peak,
}

/// Extend `fit` for `horizon_days` past the last day of `observed_post`
/// (whose first value is day `first_day`) and locate the peak.
pub fn project_peak(
    fit: &ExpFit,
    first_day: i64,
    observed_post: &[f64],
    horizon_days: usize,
) -> Result<Projection, ProjectionError> {
    if horizon_days == 0 {
        return Err(ProjectionError::EmptyHorizon);
    }
    let first_projected_day = first_day + observed_post.len() as i64;
    let projected: Vec<f64> = (0..horizon_days)
        .map(|h| fit.eval((first_projected_day + h as i64) as f64))
        .collect();

    let mut peak: Option<Peak> = None;
    let mut consider = |day: i64, value: f64, source: PeakSource| {
        if value.is_finite() && peak.is_none_or(|p| value > p.value) {
            peak = Some(Peak { day, value, source });
        }
    };
    for (i, &v) in observed_post.iter().enumerate() {
        consider(first_day + i as i64, v, PeakSource::Observed);
    }
    for (h, &v) in projected.iter().enumerate() {
        consider(first_projected_day + h as i64, v, PeakSource::Projected);
    }
    let projected_peak = peak.expect("horizon is nonempty");

    // The curve is monotone, so its maximum sits at one end of the span.
    let last_day = first_projected_day + horizon_days as i64 - 1;
    let start_day = fit.fit_window.0.min(first_projected_day);
    let curve_day = if fit.b > 0.0 { last_day } else { start_day };
    let curve_peak = Peak {
        day: curve_day,
        value: fit.eval(curve_day as f64),
        source: if curve_day >= first_projected_day {
            PeakSource::Projected
        } else {
            PeakSource::Observed
        },
    };

    Ok(Projection {
        horizon_days,
        first_projected_day,
        projected,
        projected_peak,
        curve_peak,
    })
}
