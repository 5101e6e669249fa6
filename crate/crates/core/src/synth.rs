//! Planted-cluster instances over a finite text space.
//!
//! Every document is an explicit distribution over `m` symbols, so KL
//! divergences, the prior `p(Y)` and proposal second moments can be evaluated
//! exactly by summation. Texts are sampled the way a real corpus would be:
//! pick a document uniformly, then draw a symbol from it.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logmath::logsumexp;
use crate::matrix::LogProbMatrix;
use crate::preprocess::Proposal;
use crate::seeding::rng_for;

/// Knobs for [`generate_instance`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub k_true: usize,
    pub n_docs: usize,
    /// Size of the shared symbol space.
    pub m: usize,
    /// Symmetric Dirichlet concentration; small values give right-skewed rows.
    pub concentration: f64,
    /// Weight of per-document Dirichlet noise mixed into the cluster distribution.
    pub noise: f64,
    /// Number of sampled texts (matrix columns).
    pub j: usize,
    /// Mass each document puts on a private symbol no other document favors.
    /// Adds `n_docs` symbols to the space when positive.
    pub private_mass: f64,
    /// Mass spread uniformly over the whole space, keeping every entry positive.
    pub floor: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            k_true: 3,
            n_docs: 90,
            m: 50,
            concentration: 1.0,
            noise: 0.1,
            j: 256,
            private_mass: 0.0,
            floor: 0.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(msg.to_string()));
        if self.k_true == 0 || self.m < self.k_true {
            return bad("need m >= k_true >= 1");
        }
        if self.n_docs < self.k_true {
            return bad("need n_docs >= k_true");
        }
        if self.j == 0 {
            return bad("need j >= 1");
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return bad("concentration must be positive");
        }
        for (name, v) in [
            ("noise", self.noise),
            ("private_mass", self.private_mass),
            ("floor", self.floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.private_mass + self.floor > 1.0 {
            return bad("private_mass + floor must not exceed 1");
        }
        Ok(())
    }
}

/// A generated corpus with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticInstance {
    /// Size of the full symbol space (shared plus private symbols).
    pub m: usize,
    pub k_true: usize,
    pub n_docs: usize,
    /// True `p(Y | x)` per document, each summing to 1.
    pub doc_dists: Vec<Vec<f64>>,
    /// True `p(Y | k)` per cluster.
    pub cluster_dists: Vec<Vec<f64>>,
    pub true_labels: Vec<usize>,
    #[serde(skip)]
    pub p: LogProbMatrix,
    /// Symbol drawn for each matrix column, with multiplicity.
    pub sampled_text_ids: Vec<usize>,
}

/// Symmetric Dirichlet draw; entries are kept strictly positive.
pub fn dirichlet<R: Rng + ?Sized>(dim: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut v: Vec<f64> = (0..dim).map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE)).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x = (*x / s).max(f64::MIN_POSITIVE);
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn mix(a: &[f64], b: &[f64], weight_b: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - weight_b) * x + weight_b * y).collect()
}

fn renormalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// Draws `j` symbols: a uniformly chosen document, then a symbol from it.
pub fn sample_texts<R: Rng + ?Sized>(doc_dists: &[Vec<f64>], j: usize, rng: &mut R) -> Vec<usize> {
    (0..j)
        .map(|_| {
            let d = &doc_dists[rng.random_range(0..doc_dists.len())];
            sample_index(d, rng)
        })
        .collect()
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Exact log-probability matrix for the given sampled symbols.
pub fn matrix_for_texts(doc_dists: &[Vec<f64>], texts: &[usize]) -> Result<LogProbMatrix> {
    let n = doc_dists.len();
    let mut values = Vec::with_capacity(n * texts.len());
    for d in doc_dists {
        values.extend(texts.iter().map(|&t| d[t].ln()));
    }
    let mut m = LogProbMatrix::new(n, texts.len(), values)?;
    let doc_ids = (0..n).map(|i| format!("doc-{i}")).collect();
    let text_ids = texts.iter().map(|t| format!("sym-{t}")).collect();
    m.set_ids(doc_ids, text_ids)?;
    Ok(m)
}

/// Cluster `k` owns documents `[k n / K, (k+1) n / K)`.
fn block_labels(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| i * k / n).collect()
}

fn finish_space(cfg: &SynthConfig, base: Vec<f64>, private: Option<usize>, total: usize) -> Vec<f64> {
    let shared_weight = 1.0 - cfg.private_mass - cfg.floor;
    let mut v = vec![cfg.floor / total as f64; total];
    for (x, b) in v.iter_mut().zip(&base) {
        *x += shared_weight * b;
    }
    if let Some(idx) = private {
        v[idx] += cfg.private_mass;
    } else if cfg.private_mass > 0.0 {
        // cluster distributions spread the private mass evenly
        let extra = cfg.private_mass / (total - base.len()) as f64;
        v[base.len()..].iter_mut().for_each(|x| *x += extra);
    }
    for x in &mut v {
        *x = x.max(f64::MIN_POSITIVE);
    }
    renormalize(&mut v);
    v
}

/// Draws a planted-cluster instance and its sampled log-probability matrix.
pub fn generate_instance<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SyntheticInstance> {
    cfg.validate()?;
    if cfg.private_mass > 0.0 && cfg.floor == 0.0 {
        return Err(Error::InvalidParam(
            "private symbols need a positive floor so every document can emit them".into(),
        ));
    }
    let total = if cfg.private_mass > 0.0 { cfg.m + cfg.n_docs } else { cfg.m };
    let base_clusters: Vec<Vec<f64>> = (0..cfg.k_true)
        .map(|_| dirichlet(cfg.m, cfg.concentration, rng))
        .collect();
    let true_labels = block_labels(cfg.n_docs, cfg.k_true);
    let doc_dists: Vec<Vec<f64>> = true_labels
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let noise = dirichlet(cfg.m, cfg.concentration, rng);
            let base = mix(&base_clusters[k], &noise, cfg.noise);
            let private = (cfg.private_mass > 0.0).then_some(cfg.m + i);
            finish_space(cfg, base, private, total)
        })
        .collect();
    let cluster_dists = base_clusters
        .into_iter()
        .map(|c| finish_space(cfg, c, None, total))
        .collect();
    let sampled_text_ids = sample_texts(&doc_dists, cfg.j, rng);
    let p = matrix_for_texts(&doc_dists, &sampled_text_ids)?;
    Ok(SyntheticInstance {
        m: total,
        k_true: cfg.k_true,
        n_docs: cfg.n_docs,
        doc_dists,
        cluster_dists,
        true_labels,
        p,
        sampled_text_ids,
    })
}

/// Two-level planted hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierSynthConfig {
    pub k_top: usize,
    pub k_sub: usize,
    pub docs_per_leaf: usize,
    pub m: usize,
    pub concentration: f64,
    /// Weight of fresh Dirichlet mass separating sibling sub-clusters.
    pub sub_spread: f64,
    pub noise: f64,
    pub j: usize,
}

/// A two-level instance; `instance.true_labels` are the leaf groups
/// (`top * k_sub + sub`) and `top_labels` the first-level groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierInstance {
    pub instance: SyntheticInstance,
    pub top_labels: Vec<usize>,
    pub top_dists: Vec<Vec<f64>>,
}

pub fn generate_hierarchical<R: Rng + ?Sized>(cfg: &HierSynthConfig, rng: &mut R) -> Result<HierInstance> {
    if cfg.k_top == 0 || cfg.k_sub == 0 || cfg.docs_per_leaf == 0 || cfg.j == 0 || cfg.m == 0 {
        return Err(Error::InvalidParam("hierarchical instance needs positive sizes".into()));
    }
    if !(0.0..=1.0).contains(&cfg.sub_spread) || !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::InvalidParam("sub_spread and noise must lie in [0, 1]".into()));
    }
    let top_dists: Vec<Vec<f64>> = (0..cfg.k_top)
        .map(|_| dirichlet(cfg.m, cfg.concentration, rng))
        .collect();
    let mut leaf_dists = Vec::new();
    for top in &top_dists {
        for _ in 0..cfg.k_sub {
            leaf_dists.push(mix(top, &dirichlet(cfg.m, cfg.concentration, rng), cfg.sub_spread));
        }
    }
    let mut doc_dists = Vec::new();
    let mut true_labels = Vec::new();
    let mut top_labels = Vec::new();
    for (g, leaf) in leaf_dists.iter().enumerate() {
        for _ in 0..cfg.docs_per_leaf {
            doc_dists.push(mix(leaf, &dirichlet(cfg.m, cfg.concentration, rng), cfg.noise));
            true_labels.push(g);
            top_labels.push(g / cfg.k_sub);
        }
    }
    let sampled_text_ids = sample_texts(&doc_dists, cfg.j, rng);
    let p = matrix_for_texts(&doc_dists, &sampled_text_ids)?;
    Ok(HierInstance {
        instance: SyntheticInstance {
            m: cfg.m,
            k_true: leaf_dists.len(),
            n_docs: doc_dists.len(),
            doc_dists,
            cluster_dists: leaf_dists,
            true_labels,
            p,
            sampled_text_ids,
        },
        top_labels,
        top_dists,
    })
}

impl SyntheticInstance {
    /// Same distributions, fresh texts.
    pub fn resampled<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<SyntheticInstance> {
        let sampled_text_ids = sample_texts(&self.doc_dists, j, rng);
        let p = matrix_for_texts(&self.doc_dists, &sampled_text_ids)?;
        Ok(SyntheticInstance {
            p,
            sampled_text_ids,
            ..self.clone()
        })
    }

    /// Exact prior `p(y) = mean_x p(y | x)`: the distribution texts are sampled from.
    pub fn exact_prior(&self) -> Vec<f64> {
        mean_dist(&self.doc_dists)
    }

    /// Power-mean proposal over the whole space, renormalized to sum to 1.
    pub fn optimal_proposal(&self, alpha: f64) -> Result<Proposal> {
        optimal_proposal_over(&self.doc_dists, alpha)
    }
}

fn mean_dist(dists: &[Vec<f64>]) -> Vec<f64> {
    let m = dists[0].len();
    let mut out = vec![0.0; m];
    for d in dists {
        for (o, v) in out.iter_mut().zip(d) {
            *o += v;
        }
    }
    let n = dists.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Normalized `(mean_x p(y|x)^{2 alpha})^{1 / (2 alpha)}` over the given documents.
pub fn optimal_proposal_over(doc_dists: &[Vec<f64>], alpha: f64) -> Result<Proposal> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidParam("alpha must be positive".into()));
    }
    if doc_dists.is_empty() {
        return Err(Error::Empty("document set"));
    }
    let e = 2.0 * alpha;
    let log_n = (doc_dists.len() as f64).ln();
    let m = doc_dists[0].len();
    let mut log_phi: Vec<f64> = (0..m)
        .map(|y| {
            let terms: Vec<f64> = doc_dists.iter().map(|d| e * d[y].ln()).collect();
            (logsumexp(&terms) - log_n) / e
        })
        .collect();
    let z = logsumexp(&log_phi);
    log_phi.iter_mut().for_each(|v| *v -= z);
    Proposal::new(log_phi)
}

/// `KL(p || q) = sum_m p_m ln(p_m / q_m)`.
pub fn exact_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut kl = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::AbsoluteContinuity { index: i });
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Exact second moment `E_X sum_y phi(y) (p(y|X) / phi(y))^{2 alpha}` of the
/// regularized importance weight under a proposal over the whole space.
pub fn second_moment(phi: &Proposal, instance: &SyntheticInstance, alpha: f64) -> Result<f64> {
    second_moment_over(phi, &instance.doc_dists, alpha)
}

pub fn second_moment_over(phi: &Proposal, doc_dists: &[Vec<f64>], alpha: f64) -> Result<f64> {
    let m = doc_dists.first().map_or(0, |d| d.len());
    if phi.len() != m {
        return Err(Error::LengthMismatch {
            left: phi.len(),
            right: m,
        });
    }
    let e = 2.0 * alpha;
    let per_doc: Vec<f64> = doc_dists
        .iter()
        .map(|d| {
            d.iter()
                .zip(&phi.log_phi)
                .map(|(p, lphi)| (e * p.ln() + (1.0 - e) * lphi).exp())
                .sum::<f64>()
        })
        .collect();
    Ok(per_doc.iter().sum::<f64>() / doc_dists.len() as f64)
}

/// RIS estimate `(1/J) sum_j (p_j / phi_j)^alpha ln(p_j / q_j)` from log values at
/// the sampled texts.
pub fn ris_estimate(log_p: &[f64], log_q: &[f64], log_phi: &[f64], alpha: f64) -> f64 {
    let j = log_p.len() as f64;
    log_p
        .iter()
        .zip(log_q)
        .zip(log_phi)
        .map(|((lp, lq), lphi)| (alpha * (lp - lphi)).exp() * (lp - lq))
        .sum::<f64>()
        / j
}

/// Exact KL from every document to every true cluster next to its RIS estimate
/// on the instance's sampled texts, with the exact prior as proposal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub exact_kl: Vec<Vec<f64>>,
    pub estimator_value: Vec<Vec<f64>>,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
}

pub fn oracle_report(instance: &SyntheticInstance, alpha: f64) -> Result<OracleReport> {
    let prior = instance.exact_prior();
    let texts = &instance.sampled_text_ids;
    let log_phi: Vec<f64> = texts.iter().map(|&t| prior[t].ln()).collect();
    let mut exact = Vec::with_capacity(instance.n_docs);
    let mut est = Vec::with_capacity(instance.n_docs);
    let mut errs = Vec::new();
    for (i, d) in instance.doc_dists.iter().enumerate() {
        let mut row_e = Vec::new();
        let mut row_d = Vec::new();
        for c in &instance.cluster_dists {
            let kl = exact_kl(d, c)?;
            let log_q: Vec<f64> = texts.iter().map(|&t| c[t].ln()).collect();
            let dh = ris_estimate(instance.p.row(i), &log_q, &log_phi, alpha);
            errs.push((dh - kl).abs());
            row_e.push(kl);
            row_d.push(dh);
        }
        exact.push(row_e);
        est.push(row_d);
    }
    Ok(OracleReport {
        exact_kl: exact,
        estimator_value: est,
        mean_abs_error: errs.iter().sum::<f64>() / errs.len() as f64,
        max_abs_error: errs.iter().copied().fold(0.0, f64::max),
    })
}

/// Bias, variance and RMSE of the RIS estimator for one `(alpha, J)` cell,
/// averaged over all (document, cluster) pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub j: usize,
    pub trials: usize,
    pub mean_bias: f64,
    pub variance: f64,
    pub rmse: f64,
}

/// For each `(alpha, J)`, draws `trials` fresh text samples from the exact
/// prior and compares the RIS estimates (exact prior as proposal, true cluster
/// distributions as targets) with the exact KL.
pub fn estimator_error_sweep(
    instance: &SyntheticInstance,
    alphas: &[f64],
    js: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if trials < 2 {
        return Err(Error::InvalidParam("a sweep needs at least 2 trials".into()));
    }
    let prior = instance.exact_prior();
    let n_pairs = instance.n_docs * instance.k_true;
    let exact: Vec<f64> = instance
        .doc_dists
        .iter()
        .flat_map(|d| instance.cluster_dists.iter().map(move |c| exact_kl(d, c)))
        .collect::<Result<_>>()?;
    let log_docs: Vec<Vec<f64>> = instance.doc_dists.iter().map(|d| d.iter().map(|v| v.ln()).collect()).collect();
    let log_clusters: Vec<Vec<f64>> = instance
        .cluster_dists
        .iter()
        .map(|d| d.iter().map(|v| v.ln()).collect())
        .collect();
    let log_prior: Vec<f64> = prior.iter().map(|v| v.ln()).collect();

    let mut rows = Vec::new();
    for (ai, &alpha) in alphas.iter().enumerate() {
        for (ji, &j) in js.iter().enumerate() {
            // estimates[t][pair]
            let estimates: Vec<Vec<f64>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = rng_for(seed, &[ai as u64, ji as u64, t as u64]);
                    let texts: Vec<usize> = (0..j).map(|_| sample_index(&prior, &mut rng)).collect();
                    let lphi: Vec<f64> = texts.iter().map(|&y| log_prior[y]).collect();
                    let mut out = Vec::with_capacity(n_pairs);
                    for ld in &log_docs {
                        let lp: Vec<f64> = texts.iter().map(|&y| ld[y]).collect();
                        for lc in &log_clusters {
                            let lq: Vec<f64> = texts.iter().map(|&y| lc[y]).collect();
                            out.push(ris_estimate(&lp, &lq, &lphi, alpha));
                        }
                    }
                    out
                })
                .collect();
            let tf = trials as f64;
            let mut bias = 0.0;
            let mut var = 0.0;
            let mut mse = 0.0;
            for (pair, &truth) in exact.iter().enumerate() {
                let mean = estimates.iter().map(|e| e[pair]).sum::<f64>() / tf;
                bias += mean - truth;
                var += estimates.iter().map(|e| (e[pair] - mean).powi(2)).sum::<f64>() / (tf - 1.0);
                mse += estimates.iter().map(|e| (e[pair] - truth).powi(2)).sum::<f64>() / tf;
            }
            let np = n_pairs as f64;
            rows.push(SweepRow {
                alpha,
                j,
                trials,
                mean_bias: bias / np,
                variance: var / np,
                rmse: (mse / np).sqrt(),
            });
        }
    }
    Ok(rows)
}
