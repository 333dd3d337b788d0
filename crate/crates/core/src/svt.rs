//! Singular value thresholding: replace a matrix by its best rank-r
//! approximation, with r picked by a fixed cap or a spectral-energy rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvtError {
    #[error("matrix contains non-finite entries")]
    NonFiniteInput,
    #[error("matrix is empty ({0} x {1})")]
    EmptyMatrix(usize, usize),
    #[error("singular value spectrum is all zero")]
    AllZeroSpectrum,
    #[error("invalid svt config: {0}")]
    InvalidConfig(String),
    #[error("singular value decomposition did not converge")]
    NoConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankRule {
    /// Keep at most `k` components.
    Fixed(usize),
    /// Keep the fewest components whose squared singular values reach this
    /// fraction of the total.
    Energy(f64),
}

fn default_min_rank() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvtConfig {
    pub rank_rule: RankRule,
    #[serde(default = "default_min_rank")]
    pub min_rank: usize,
}

impl Default for SvtConfig {
    fn default() -> Self {
        Self {
            rank_rule: RankRule::Energy(0.90),
            min_rank: 1,
        }
    }
}

impl SvtConfig {
    pub fn fixed(k: usize) -> Self {
        Self {
            rank_rule: RankRule::Fixed(k),
            min_rank: 1,
        }
    }

    pub fn energy(fraction: f64) -> Self {
        Self {
            rank_rule: RankRule::Energy(fraction),
            min_rank: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SvtError> {
        match self.rank_rule {
            RankRule::Fixed(0) => return Err(SvtError::InvalidConfig("fixed rank must be >= 1".into())),
            RankRule::Energy(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(SvtError::InvalidConfig(format!("energy fraction {f} outside (0, 1]")))
            }
            _ => {}
        }
        if self.min_rank == 0 {
            return Err(SvtError::InvalidConfig("min_rank must be >= 1".into()));
        }
        Ok(())
    }
}

/// Number of components to keep for a descending spectrum.
pub fn select_rank(singular_values: &[f64], config: &SvtConfig) -> Result<usize, SvtError> {
    config.validate()?;
    let full = singular_values.len();
    if singular_values.iter().all(|&s| s == 0.0) {
        return Err(SvtError::AllZeroSpectrum);
    }
    let rank = match config.rank_rule {
        RankRule::Fixed(k) => k.min(full),
        RankRule::Energy(fraction) => {
            let squares: Vec<f64> = singular_values.iter().map(|s| s * s).collect();
            // Running sums use the same order as the total so the last
            // prefix equals the total exactly.
            let total: f64 = squares.iter().sum();
            let mut cumulative = 0.0;
            let mut rank = full;
            for (i, sq) in squares.iter().enumerate() {
                cumulative += sq;
                if cumulative / total >= fraction {
                    rank = i + 1;
                    break;
                }
            }
            rank
        }
    };
    Ok(rank.max(config.min_rank).min(full))
}

/// Singular triplets sorted by descending singular value.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Decomposition {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self, SvtError> {
        let (n, m) = matrix.shape();
        if n == 0 || m == 0 {
            return Err(SvtError::EmptyMatrix(n, m));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(SvtError::NonFiniteInput);
        }
        // nalgebra's own SVD can return a wrong factorisation for wide
        // rank-deficient input (exactly what truncated blocks are), so the
        // decomposition is done by faer.
        let input = faer::Mat::<f64>::from_fn(n, m, |r, c| matrix[(r, c)]);
        let svd = input.thin_svd().map_err(|_| SvtError::NoConvergence)?;
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let k = s.nrows();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite singular values").then(a.cmp(&b)));
        Ok(Self {
            u: DMatrix::from_fn(n, k, |r, c| u[(r, order[c])]),
            singular_values: DVector::from_iterator(k, order.iter().map(|&i| s[i])),
            v_t: DMatrix::from_fn(k, m, |r, c| v[(c, order[r])]),
        })
    }

    /// Sum of the leading `rank` rank-one terms.
    pub fn reconstruct(&self, rank: usize) -> DMatrix<f64> {
        let rank = rank.min(self.singular_values.len());
        let mut out = DMatrix::zeros(self.u.nrows(), self.v_t.ncols());
        for i in 0..rank {
            out += self.singular_values[i] * self.u.column(i) * self.v_t.row(i);
        }
        out
    }
}

/// A rank-truncated matrix plus the spectrum it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoisedBlock {
    pub matrix: DMatrix<f64>,
    pub rank_used: usize,
    pub singular_values: Vec<f64>,
}

impl DenoisedBlock {
    /// Wrap a matrix as-is, without truncation.
    pub fn identity(matrix: DMatrix<f64>) -> Result<Self, SvtError> {
        let dec = Decomposition::new(&matrix)?;
        let singular_values: Vec<f64> = dec.singular_values.iter().copied().collect();
        Ok(Self {
            rank_used: singular_values.iter().filter(|&&s| s > 0.0).count(),
            matrix,
            singular_values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn svt(matrix: &DMatrix<f64>, config: &SvtConfig) -> Result<DenoisedBlock, SvtError> {
    config.validate()?;
    let dec = Decomposition::new(matrix)?;
    let singular_values: Vec<f64> = dec.singular_values.iter().copied().collect();
    let rank = match select_rank(&singular_values, config) {
        Ok(r) => r,
        Err(SvtError::AllZeroSpectrum) => 0,
        Err(e) => return Err(e),
    };
    Ok(DenoisedBlock {
        matrix: dec.reconstruct(rank),
        rank_used: rank,
        singular_values,
    })
}
