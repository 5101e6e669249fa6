use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Centroid initialization strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Random,
    /// D²-style seeding on offset distortions.
    Kmeanspp,
}

/// How the shared proposal `phi(y_j)` is estimated from the matrix columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProposalEstimator {
    /// Power mean of column probabilities with exponent `2 * alpha`.
    #[default]
    PowerMean,
    /// Arithmetic mean of column probabilities.
    Naive,
}

/// Clustering parameters shared by the flat and hierarchical drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha: f64,
    pub k: usize,
    pub restarts: usize,
    /// Per-column clipping threshold in standard deviations; `None` disables clipping.
    pub clip_sigmas: Option<f64>,
    pub max_iters: usize,
    pub seed: u64,
    pub proposal: ProposalEstimator,
    /// Number of texts drawn per bootstrap in hierarchical clustering.
    /// `None` keeps the matrix width.
    pub resample_size: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            k: 2,
            restarts: 10,
            clip_sigmas: Some(5.0),
            max_iters: 300,
            seed: 0,
            proposal: ProposalEstimator::PowerMean,
            resample_size: None,
        }
    }
}

impl Params {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParam(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidParam("k must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParam("restarts must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParam("max_iters must be at least 1".into()));
        }
        if let Some(s) = self.clip_sigmas {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "clip_sigmas must be positive, got {s}"
                )));
            }
        }
        if self.resample_size == Some(0) {
            return Err(Error::InvalidParam("resample_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Validates against a concrete number of rows.
    pub fn validate_for(&self, n_rows: usize) -> Result<()> {
        self.validate()?;
        if self.k > n_rows {
            return Err(Error::TooManyClusters {
                k: self.k,
                n: n_rows,
            });
        }
        Ok(())
    }
}
