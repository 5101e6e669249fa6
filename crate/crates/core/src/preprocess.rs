//! Preprocessing ahead of clustering: per-column outlier clipping, proposal
//! estimation and regularized importance weights.
//!
//! Column reductions always walk rows in ascending order so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::logmath::logsumexp;
use crate::matrix::{LogProbMatrix, WeightMatrix};
use crate::params::{Params, ProposalEstimator};

/// Per-column mean and population standard deviation of `log P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Log of the (unnormalized, `Z = 1`) proposal mass of each sampled text.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub log_phi: Vec<f64>,
}

impl Proposal {
    pub fn new(log_phi: Vec<f64>) -> Result<Self> {
        if let Some(j) = log_phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: 0,
                col: j,
                value: log_phi[j],
            });
        }
        Ok(Self { log_phi })
    }

    pub fn len(&self) -> usize {
        self.log_phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_phi.is_empty()
    }

    /// Picks entries by column index, duplicates allowed.
    pub fn select(&self, cols: &[usize]) -> Proposal {
        Proposal {
            log_phi: cols.iter().map(|&j| self.log_phi[j]).collect(),
        }
    }

    /// Adds `ln(scale)` to every entry.
    pub fn scaled(&self, scale: f64) -> Proposal {
        let shift = scale.ln();
        Proposal {
            log_phi: self.log_phi.iter().map(|v| v + shift).collect(),
        }
    }
}

/// Column statistics of a raw row-major buffer with `n_cols` columns.
pub fn column_stats(values: &[f64], n_cols: usize) -> ColumnStats {
    let n_rows = values.len() / n_cols;
    let (mu, sigma) = (0..n_cols)
        .into_par_iter()
        .map(|j| {
            let n = n_rows as f64;
            let mean = (0..n_rows).map(|i| values[i * n_cols + j]).sum::<f64>() / n;
            let var = (0..n_rows)
                .map(|i| {
                    let d = values[i * n_cols + j] - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            (mean, var.sqrt())
        })
        .unzip();
    ColumnStats { mu, sigma }
}

/// Clips a raw row-major buffer in place: every entry above
/// `mu_j + sigmas * sigma_j` is reset to that threshold. Statistics are taken
/// once, before any entry is changed. Returns the number of replaced entries
/// and the statistics used.
pub fn clip_columns_in_place(values: &mut [f64], n_cols: usize, sigmas: f64) -> (usize, ColumnStats) {
    let stats = column_stats(values, n_cols);
    let thresholds: Vec<f64> = stats
        .mu
        .iter()
        .zip(&stats.sigma)
        .map(|(m, s)| m + sigmas * s)
        .collect();
    let count = values
        .par_chunks_mut(n_cols)
        .map(|row| {
            let mut c = 0usize;
            for (v, &t) in row.iter_mut().zip(&thresholds) {
                if *v > t {
                    *v = t;
                    c += 1;
                }
            }
            c
        })
        .sum();
    (count, stats)
}

/// Resets outlying log-probabilities to their column threshold.
pub fn clip_log_probs(p: &LogProbMatrix, clip_sigmas: f64) -> (LogProbMatrix, usize) {
    let mut values = p.values().to_vec();
    let (count, _) = clip_columns_in_place(&mut values, p.n_texts(), clip_sigmas);
    // clipping only lowers entries, so validity is preserved
    let clipped = LogProbMatrix::from_parts_unchecked(
        p.n_docs(),
        p.n_texts(),
        values,
        p.doc_ids().to_vec(),
        p.text_ids().to_vec(),
    );
    (clipped, count)
}

/// Power-mean proposal `phi_j = (mean_i P_ij^{2 alpha})^{1 / (2 alpha)}` over
/// the selected rows (all rows when `rows` is `None`), evaluated in log domain.
pub fn estimate_proposal(p: &LogProbMatrix, alpha: f64, rows: Option<&[usize]>) -> Result<Proposal> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "power-mean proposal needs alpha > 0, got {alpha}"
        )));
    }
    let all: Vec<usize>;
    let rows = match rows {
        Some([]) => return Err(Error::Empty("proposal row subset is empty")),
        Some(r) => r,
        None => {
            all = (0..p.n_docs()).collect();
            &all
        }
    };
    if let Some(&bad) = rows.iter().find(|&&i| i >= p.n_docs()) {
        return Err(Error::InvalidParam(format!("row index {bad} out of range")));
    }
    let exponent = 2.0 * alpha;
    let log_m = (rows.len() as f64).ln();
    let log_phi = (0..p.n_texts())
        .into_par_iter()
        .map(|j| {
            let scaled: Vec<f64> = rows.iter().map(|&i| exponent * p.get(i, j)).collect();
            (logsumexp(&scaled) - log_m) / exponent
        })
        .collect();
    Proposal::new(log_phi)
}

/// Arithmetic column mean of probabilities.
pub fn naive_proposal(p: &LogProbMatrix) -> Proposal {
    let log_n = (p.n_docs() as f64).ln();
    let log_phi = (0..p.n_texts())
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = (0..p.n_docs()).map(|i| p.get(i, j)).collect();
            logsumexp(&col) - log_n
        })
        .collect();
    Proposal { log_phi }
}

/// `W_ij = exp(alpha * (log P_ij - log phi_j))`.
pub fn compute_weights(p: &LogProbMatrix, phi: &Proposal, alpha: f64) -> Result<WeightMatrix> {
    if phi.len() != p.n_texts() {
        return Err(Error::LengthMismatch {
            left: phi.len(),
            right: p.n_texts(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let n_texts = p.n_texts();
    let mut values = vec![0.0; p.values().len()];
    values
        .par_chunks_mut(n_texts)
        .enumerate()
        .try_for_each(|(i, out)| {
            for (j, w) in out.iter_mut().enumerate() {
                let v = (alpha * (p.get(i, j) - phi.log_phi[j])).exp();
                if !(v.is_finite() && v > 0.0) {
                    return Err((i, j, v));
                }
                *w = v;
            }
            Ok(())
        })
        .map_err(|(row, col, value)| Error::WeightOutOfRange { row, col, value })?;
    WeightMatrix::new(p.n_docs(), n_texts, values)
}

/// Output of the full preprocessing pipeline.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// The (possibly clipped) log-probability matrix.
    pub p: LogProbMatrix,
    pub phi: Proposal,
    pub w: WeightMatrix,
    pub clipped: usize,
}

/// The proposal configured in `params`.
///
/// With `alpha == 0` every weight is 1 whatever the proposal, so the naive
/// estimator stands in for the power mean (whose exponent is undefined there).
pub fn proposal_for(p: &LogProbMatrix, params: &Params, rows: Option<&[usize]>) -> Result<Proposal> {
    match params.proposal {
        ProposalEstimator::PowerMean if params.alpha > 0.0 => estimate_proposal(p, params.alpha, rows),
        _ => match rows {
            None => Ok(naive_proposal(p)),
            Some(r) => {
                let all: Vec<usize> = (0..p.n_texts()).collect();
                Ok(naive_proposal(&p.select(r, &all)))
            }
        },
    }
}

/// Clip, estimate the proposal and compute weights, in that order.
pub fn prepare(p: &LogProbMatrix, params: &Params) -> Result<Prepared> {
    params.validate()?;
    let (p, clipped) = match params.clip_sigmas {
        Some(s) => clip_log_probs(p, s),
        None => (p.clone(), 0),
    };
    let phi = proposal_for(&p, params, None)?;
    let w = compute_weights(&p, &phi, params.alpha)?;
    Ok(Prepared { p, phi, w, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: usize, cols: usize, probs: &[f64]) -> LogProbMatrix {
        LogProbMatrix::new(rows, cols, probs.iter().map(|p| p.ln()).collect()).unwrap()
    }

    /// Two-pass reference: mean, then population variance, straight from the definitions.
    fn reference_threshold(col: &[f64], sigmas: f64) -> f64 {
        let n = col.len() as f64;
        let mut mean = 0.0;
        for v in col {
            mean += v;
        }
        mean /= n;
        let mut ss = 0.0;
        for v in col {
            ss += (v - mean) * (v - mean);
        }
        mean + sigmas * (ss / n).sqrt()
    }

    #[test]
    fn constant_column_is_untouched() {
        let mut v = vec![-2.0; 10];
        let (count, stats) = clip_columns_in_place(&mut v, 1, 5.0);
        assert_eq!(count, 0);
        assert_eq!(stats.sigma[0], 0.0);
        assert!(v.iter().all(|&x| x == -2.0));
    }

    #[test]
    fn single_outlier_is_reset_to_threshold() {
        let mut col = vec![-1.0; 100];
        col[37] = 9.0;
        let expected = reference_threshold(&col, 5.0);
        // frozen from the reference: mu = -0.9, sigma = sqrt(0.99)
        assert!((expected - 4.074937185533100).abs() < 1e-12);
        let (count, stats) = clip_columns_in_place(&mut col, 1, 5.0);
        assert_eq!(count, 1);
        assert!((stats.mu[0] + 0.9).abs() < 1e-12);
        assert!((stats.sigma[0] - 0.99f64.sqrt()).abs() < 1e-12);
        assert!((col[37] - expected).abs() < 1e-12);
        assert!(col.iter().enumerate().all(|(i, &x)| i == 37 || x == -1.0));
    }

    #[test]
    fn no_outliers_is_bitwise_identity() {
        let p = mat(3, 2, &[0.1, 0.2, 0.3, 0.25, 0.2, 0.22]);
        let (clipped, count) = clip_log_probs(&p, 5.0);
        assert_eq!(count, 0);
        let a: Vec<u64> = p.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = clipped.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn proposal_single_row_is_that_row() {
        let p = mat(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let phi = estimate_proposal(&p, 0.25, Some(&[1])).unwrap();
        for (j, lp) in phi.log_phi.iter().enumerate() {
            assert!((lp - p.get(1, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn proposal_at_half_is_arithmetic_mean() {
        let p = mat(2, 1, &[0.1, 0.4]);
        let phi = estimate_proposal(&p, 0.5, None).unwrap();
        assert!((phi.log_phi[0].exp() - 0.25).abs() < 1e-12);
        let naive = naive_proposal(&p);
        assert!((naive.log_phi[0].exp() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn proposal_quarter_alpha_two_docs() {
        let p = mat(2, 1, &[0.1, 0.4]);
        let phi = estimate_proposal(&p, 0.25, None).unwrap();
        // linear-domain evaluation of the power mean
        let direct = ((0.1f64.powf(0.5) + 0.4f64.powf(0.5)) / 2.0).powf(2.0);
        assert!((direct - 0.225).abs() < 1e-12);
        assert!((phi.log_phi[0].exp() - direct).abs() < 1e-12);
    }

    #[test]
    fn proposal_rejects_zero_alpha_and_empty_rows() {
        let p = mat(1, 1, &[0.5]);
        assert!(estimate_proposal(&p, 0.0, None).is_err());
        assert!(estimate_proposal(&p, 0.25, Some(&[])).is_err());
    }

    #[test]
    fn weights_examples() {
        let p = mat(1, 1, &[0.4]);
        let phi = Proposal::new(vec![0.225f64.ln()]).unwrap();
        let w = compute_weights(&p, &phi, 0.25).unwrap();
        let direct = (0.4f64 / 0.225).powf(0.25);
        assert!((direct - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((w.get(0, 0) - direct).abs() < 1e-12);

        let phi_eq = Proposal::new(vec![0.4f64.ln()]).unwrap();
        assert!((compute_weights(&p, &phi_eq, 0.7).unwrap().get(0, 0) - 1.0).abs() < 1e-15);

        let p2 = mat(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let w0 = compute_weights(&p2, &naive_proposal(&p2), 0.0).unwrap();
        assert!(w0.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn weights_overflow_names_the_entry() {
        let p = LogProbMatrix::new(2, 2, vec![-1.0, -1.0, -1.0, -1.0]).unwrap();
        let phi = Proposal::new(vec![-1.0, -2000.0]).unwrap();
        match compute_weights(&p, &phi, 1.0) {
            Err(Error::WeightOutOfRange { row: 0, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_column_gives_unit_weights() {
        let p = mat(3, 1, &[0.2, 0.2, 0.2]);
        let phi = estimate_proposal(&p, 0.25, None).unwrap();
        assert!((phi.log_phi[0] - 0.2f64.ln()).abs() < 1e-12);
        let w = compute_weights(&p, &phi, 0.25).unwrap();
        assert!(w.values().iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    fn matrix_strategy() -> impl Strategy<Value = LogProbMatrix> {
        (1usize..8, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-60.0f64..-1e-3, r * c)
                .prop_map(move |v| LogProbMatrix::new(r, c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn power_mean_at_half_equals_naive(p in matrix_strategy()) {
            let a = estimate_proposal(&p, 0.5, None).unwrap();
            let b = naive_proposal(&p);
            for (x, y) in a.log_phi.iter().zip(&b.log_phi) {
                prop_assert!(((x.exp() - y.exp()) / y.exp()).abs() < 1e-12);
            }
        }

        #[test]
        fn power_mean_between_column_extremes(p in matrix_strategy(), alpha in 0.01f64..1.0) {
            let phi = estimate_proposal(&p, alpha, None).unwrap();
            for j in 0..p.n_texts() {
                let col: Vec<f64> = (0..p.n_docs()).map(|i| p.get(i, j).exp()).collect();
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(0.0, f64::max);
                let v = phi.log_phi[j].exp();
                prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
            }
        }

        #[test]
        fn clipping_respects_original_thresholds(
            v in proptest::collection::vec(-50.0f64..0.0, 40),
            spike in 0usize..40,
            sigmas in 0.5f64..6.0,
        ) {
            let mut v = v;
            v[spike] = 0.0;
            let p = LogProbMatrix::new(10, 4, v).unwrap();
            let before = column_stats(p.values(), 4);
            let (clipped, _) = clip_log_probs(&p, sigmas);
            for i in 0..10 {
                for j in 0..4 {
                    let t = before.mu[j] + sigmas * before.sigma[j];
                    prop_assert!(clipped.get(i, j) <= t);
                    prop_assert!(clipped.get(i, j) <= p.get(i, j));
                }
            }
        }
    }
}
