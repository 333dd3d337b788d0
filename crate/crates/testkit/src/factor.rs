//! Panels drawn from a tensor factor model
//! `y[d][n][t] = sum_i u[n][i] * v[t][i] * w[d][i]`, so every unit's outcome
//! under every intervention is known.

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use si_core::bucket::InterventionPartition;
use si_core::panel::{AlignedPanel, AlignedRow, AlignmentSpec};

#[derive(Debug, Clone)]
pub struct FactorModel {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub t0: usize,
}

impl FactorModel {
    /// Factors drawn uniformly from `[0.5, 1.5]`.
    pub fn uniform<R: Rng>(rng: &mut R, n: usize, t: usize, t0: usize, d: usize, rank: usize) -> Self {
        let mut draw = |rows: usize| -> Vec<Vec<f64>> {
            (0..rows).map(|_| (0..rank).map(|_| rng.random_range(0.5..1.5)).collect()).collect()
        };
        let u = draw(n);
        let v = draw(t);
        let w = draw(d);
        Self { u, v, w, t0 }
    }

    pub fn n_units(&self) -> usize {
        self.u.len()
    }

    pub fn n_days(&self) -> usize {
        self.v.len()
    }

    pub fn n_interventions(&self) -> usize {
        self.w.len()
    }

    pub fn label(d: usize) -> String {
        format!("d{d}")
    }

    pub fn unit(n: usize) -> String {
        format!("u{n:03}")
    }

    /// Intervention actually received in the post period.
    pub fn assigned(&self, n: usize) -> usize {
        n % self.n_interventions()
    }

    pub fn outcome(&self, d: usize, n: usize, t: usize) -> f64 {
        (0..self.u[n].len()).map(|i| self.u[n][i] * self.v[t][i] * self.w[d][i]).sum()
    }

    /// True post-period trajectory of unit `n` under intervention `d`.
    pub fn truth(&self, d: usize, n: usize) -> Vec<f64> {
        (self.t0..self.n_days()).map(|t| self.outcome(d, n, t)).collect()
    }

    /// Observed row: the control intervention (`d0`) before `t0`, the
    /// assigned one after.
    pub fn observed_row(&self, n: usize) -> Vec<f64> {
        let d = self.assigned(n);
        (0..self.n_days())
            .map(|t| self.outcome(if t < self.t0 { 0 } else { d }, n, t))
            .collect()
    }

    pub fn mean_abs(&self) -> f64 {
        let total: f64 = (0..self.n_units()).flat_map(|n| self.observed_row(n)).map(f64::abs).sum();
        total / (self.n_units() * self.n_days()) as f64
    }

    pub fn spec(&self) -> AlignmentSpec {
        AlignmentSpec::new(0.0, self.t0, self.n_days() - self.t0).expect("valid spec")
    }

    /// Observed panel with optional additive Gaussian noise.
    pub fn panel<R: Rng>(&self, noise_sd: f64, rng: &mut R) -> AlignedPanel {
        let normal = Normal::new(0.0, noise_sd.max(0.0)).expect("valid sd");
        let day0 = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let rows = (0..self.n_units())
            .map(|n| {
                let values = self
                    .observed_row(n)
                    .into_iter()
                    .map(|y| if noise_sd > 0.0 { y + normal.sample(rng) } else { y })
                    .collect::<Vec<_>>();
                AlignedRow {
                    unit_id: Self::unit(n),
                    day0_index: self.t0,
                    day0_date: day0,
                    observed: vec![true; values.len()],
                    values,
                }
            })
            .collect();
        AlignedPanel::from_rows(rows, &self.spec()).expect("consistent rows")
    }

    pub fn partition(&self) -> InterventionPartition {
        let labels = (0..self.n_interventions()).map(Self::label).collect();
        InterventionPartition::from_assignments(
            labels,
            (0..self.n_units()).map(|n| (Self::unit(n), Self::label(self.assigned(n)))),
        )
        .expect("valid partition")
    }
}
