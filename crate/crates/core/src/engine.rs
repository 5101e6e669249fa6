//! Flat generative clustering: hard assignment of documents to the centroid
//! with the lowest regularized-importance-sampled KL estimate, alternated with
//! closed-form centroid updates until the total distortion stops improving.
//!
//! The distortion of document `i` against centroid `c` is
//!
//! ```text
//! d(i, c) = (1/J) * sum_j W_ij * (log P_ij - log c_j)
//! ```
//!
//! and may be negative. The within-cluster minimizer of this quantity over the
//! simplex is the normalized column sum of the members' weight rows.

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{LogProbMatrix, WeightMatrix};
use crate::params::{Init, Params};
use crate::preprocess::prepare;

/// Relative improvement at or below which iteration stops.
pub const CONVERGENCE_TOL: f64 = 1e-10;

/// `K` probability vectors over the `J` sampled texts, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    k: usize,
    n_texts: usize,
    values: Vec<f64>,
}

impl CentroidSet {
    /// Validates that each centroid is nonnegative and sums to 1 within 1e-9.
    pub fn new(k: usize, n_texts: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * n_texts {
            return Err(Error::DimensionMismatch {
                expected: k * n_texts,
                found: values.len(),
            });
        }
        for (c, row) in values.chunks(n_texts.max(1)).enumerate() {
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidParam(format!(
                    "centroid {c} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParam(format!("centroid {c} sums to {s}")));
            }
        }
        Ok(Self { k, n_texts, values })
    }

    fn from_rows_normalized(rows: Vec<Vec<f64>>, n_texts: usize) -> Self {
        let k = rows.len();
        let mut values = Vec::with_capacity(k * n_texts);
        for row in rows {
            values.extend(normalized(&row));
        }
        Self { k, n_texts, values }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_texts(&self) -> usize {
        self.n_texts
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_texts..(k + 1) * self.n_texts]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn log_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.ln()).collect()
    }
}

fn normalized(row: &[f64]) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.iter().map(|v| v / s).collect()
}

/// Hard assignment of every document plus its distortion against its centroid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub labels: Vec<usize>,
    pub per_doc_distortion: Vec<f64>,
    pub total_distortion: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One clustering run: final state plus the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub assignment: Assignment,
    pub centroids: CentroidSet,
    pub seed: u64,
    /// Total distortion after each assign/update pass.
    pub trace: Vec<f64>,
}

fn check_dims(p: &LogProbMatrix, w: &WeightMatrix) -> Result<()> {
    if p.n_docs() != w.n_docs() || p.n_texts() != w.n_texts() {
        return Err(Error::DimensionMismatch {
            expected: p.n_docs() * p.n_texts(),
            found: w.n_docs() * w.n_texts(),
        });
    }
    Ok(())
}

#[inline]
fn distortion_with_log(p_row: &[f64], w_row: &[f64], log_c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((lp, w), lc) in p_row.iter().zip(w_row).zip(log_c) {
        acc += w * (lp - lc);
    }
    acc / p_row.len() as f64
}

fn check_support(w_row: &[f64], centroid: &[f64], cluster: usize) -> Result<()> {
    match centroid.iter().zip(w_row).position(|(c, w)| *c == 0.0 && *w > 0.0) {
        Some(col) => Err(Error::ZeroCentroidMass { cluster, col }),
        None => Ok(()),
    }
}

/// RIS distortion of document `i` against a single centroid.
pub fn distortion_row(i: usize, centroid: &[f64], p: &LogProbMatrix, w: &WeightMatrix) -> Result<f64> {
    check_dims(p, w)?;
    if centroid.len() != p.n_texts() {
        return Err(Error::LengthMismatch {
            left: centroid.len(),
            right: p.n_texts(),
        });
    }
    check_support(w.row(i), centroid, 0)?;
    let log_c: Vec<f64> = centroid.iter().map(|v| v.ln()).collect();
    Ok(distortion_with_log(p.row(i), w.row(i), &log_c))
}

fn check_centroids(w: &WeightMatrix, centroids: &CentroidSet) -> Result<()> {
    if centroids.n_texts() != w.n_texts() {
        return Err(Error::LengthMismatch {
            left: centroids.n_texts(),
            right: w.n_texts(),
        });
    }
    // W > 0 everywhere, so any zero centroid entry is a support violation
    for k in 0..centroids.k() {
        if let Some(col) = centroids.centroid(k).iter().position(|&c| c == 0.0) {
            return Err(Error::ZeroCentroidMass { cluster: k, col });
        }
    }
    Ok(())
}

/// Labels each document with its closest centroid (ties go to the lowest index).
pub fn assign_all(
    p: &LogProbMatrix,
    w: &WeightMatrix,
    centroids: &CentroidSet,
) -> Result<(Vec<usize>, Vec<f64>)> {
    check_dims(p, w)?;
    check_centroids(w, centroids)?;
    let log_c = centroids.log_values();
    let j = p.n_texts();
    let pairs: Vec<(usize, f64)> = (0..p.n_docs())
        .into_par_iter()
        .map(|i| {
            let (pr, wr) = (p.row(i), w.row(i));
            let mut best = (0, f64::INFINITY);
            for k in 0..centroids.k() {
                let d = distortion_with_log(pr, wr, &log_c[k * j..(k + 1) * j]);
                if d < best.1 {
                    best = (k, d);
                }
            }
            best
        })
        .collect();
    Ok(pairs.into_iter().unzip())
}

/// Distortion of every document against the centroid named by its label.
pub fn evaluate(
    p: &LogProbMatrix,
    w: &WeightMatrix,
    labels: &[usize],
    centroids: &CentroidSet,
) -> Result<Vec<f64>> {
    check_dims(p, w)?;
    check_centroids(w, centroids)?;
    if labels.len() != p.n_docs() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: p.n_docs(),
        });
    }
    let log_c = centroids.log_values();
    let j = p.n_texts();
    Ok(labels
        .par_iter()
        .enumerate()
        .map(|(i, &k)| distortion_with_log(p.row(i), w.row(i), &log_c[k * j..(k + 1) * j]))
        .collect())
}

/// Sum in document order, independent of thread count.
fn total(per_doc: &[f64]) -> f64 {
    per_doc.iter().sum()
}

/// Centroid `k` becomes the normalized column sum of the weight rows labeled `k`.
///
/// A cluster with no members is reseeded from the normalized weight row of
/// the document with the largest `per_doc_distortion` not already used for
/// reseeding; the document keeps its label.
pub fn update_centroids(
    w: &WeightMatrix,
    labels: &[usize],
    k: usize,
    per_doc_distortion: &[f64],
) -> CentroidSet {
    let n_texts = w.n_texts();
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let empty: Vec<usize> = (0..k).filter(|&c| members[c].is_empty()).collect();
    if !empty.is_empty() {
        let mut by_distortion: Vec<usize> = (0..labels.len()).collect();
        // largest distortion first, ties to the lower row
        by_distortion.sort_by(|&a, &b| {
            per_doc_distortion[b]
                .total_cmp(&per_doc_distortion[a])
                .then(a.cmp(&b))
        });
        for (c, &row) in empty.iter().zip(by_distortion.iter().cycle()) {
            log::debug!("cluster {c} is empty; reseeding from document {row}");
            members[*c] = vec![row];
        }
    }
    let rows: Vec<Vec<f64>> = members
        .par_iter()
        .map(|rows| {
            let mut acc = vec![0.0; n_texts];
            for &i in rows {
                for (a, v) in acc.iter_mut().zip(w.row(i)) {
                    *a += v;
                }
            }
            acc
        })
        .collect();
    CentroidSet::from_rows_normalized(rows, n_texts)
}

fn centroids_from_rows(w: &WeightMatrix, rows: &[usize]) -> CentroidSet {
    CentroidSet::from_rows_normalized(rows.iter().map(|&i| w.row(i).to_vec()).collect(), w.n_texts())
}

/// Rows for random initialization: `k` distinct rows, uniformly without replacement.
pub fn random_rows<R: Rng + ?Sized>(n_docs: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > n_docs {
        return Err(Error::TooManyClusters { k, n: n_docs });
    }
    Ok(index::sample(rng, n_docs, k).into_vec())
}

/// Centroids from `k` randomly chosen, normalized weight rows.
pub fn init_random<R: Rng + ?Sized>(w: &WeightMatrix, k: usize, rng: &mut R) -> Result<CentroidSet> {
    let rows = random_rows(w.n_docs(), k, rng)?;
    Ok(centroids_from_rows(w, &rows))
}

/// Selection probabilities for the next k-means++ seed given the rows already
/// chosen: distances are the minimum distortion to any chosen centroid, offset
/// by their global minimum, and squared. Chosen rows get probability zero. If
/// every remaining offset distance is zero, the unchosen rows are uniform.
pub fn kmeanspp_probabilities(p: &LogProbMatrix, w: &WeightMatrix, chosen: &[usize]) -> Result<Vec<f64>> {
    check_dims(p, w)?;
    let n = p.n_docs();
    if chosen.is_empty() || chosen.len() >= n {
        return Err(Error::InvalidParam(
            "k-means++ needs at least one chosen and one unchosen row".into(),
        ));
    }
    let centroids = centroids_from_rows(w, chosen);
    let log_c = centroids.log_values();
    let j = p.n_texts();
    let nearest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..centroids.k())
                .map(|k| distortion_with_log(p.row(i), w.row(i), &log_c[k * j..(k + 1) * j]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let floor = nearest.iter().copied().fold(f64::INFINITY, f64::min);
    let mut mass: Vec<f64> = nearest.iter().map(|d| (d - floor).powi(2)).collect();
    for &c in chosen {
        mass[c] = 0.0;
    }
    let sum: f64 = mass.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        Ok(mass.into_iter().map(|m| m / sum).collect())
    } else {
        let free = (n - chosen.len()) as f64;
        let mut uniform = vec![1.0 / free; n];
        for &c in chosen {
            uniform[c] = 0.0;
        }
        Ok(uniform)
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Rows chosen by k-means++ seeding over offset distortions.
pub fn kmeanspp_rows<R: Rng + ?Sized>(
    p: &LogProbMatrix,
    w: &WeightMatrix,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = p.n_docs();
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut chosen = vec![rng.random_range(0..n)];
    while chosen.len() < k {
        let probs = kmeanspp_probabilities(p, w, &chosen)?;
        chosen.push(sample_categorical(&probs, rng));
    }
    Ok(chosen)
}

pub fn init_kmeanspp<R: Rng + ?Sized>(
    p: &LogProbMatrix,
    w: &WeightMatrix,
    k: usize,
    rng: &mut R,
) -> Result<CentroidSet> {
    let rows = kmeanspp_rows(p, w, k, rng)?;
    Ok(centroids_from_rows(w, &rows))
}

/// Runs the assign/update loop from an initialization drawn with `seed`.
/// `p` and `w` are used as given (no clipping or reweighting happens here).
pub fn cluster_prepared(
    p: &LogProbMatrix,
    w: &WeightMatrix,
    params: &Params,
    init: Init,
    seed: u64,
) -> Result<RunResult> {
    check_dims(p, w)?;
    params.validate_for(p.n_docs())?;
    let k = params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = match init {
        Init::Random => init_random(w, k, &mut rng)?,
        Init::Kmeanspp => init_kmeanspp(p, w, k, &mut rng)?,
    };

    let mut prev = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut labels;
    let mut per_doc;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (assigned, assign_dist) = assign_all(p, w, &centroids)?;
        labels = assigned;
        centroids = update_centroids(w, &labels, k, &assign_dist);
        per_doc = evaluate(p, w, &labels, &centroids)?;
        let current = total(&per_doc);
        log::debug!("seed {seed} iteration {iterations}: total distortion {current}");
        trace.push(current);
        if prev.is_finite() && prev - current <= CONVERGENCE_TOL * prev.abs() {
            converged = true;
            break;
        }
        if iterations >= params.max_iters {
            break;
        }
        prev = current;
    }

    let total_distortion = total(&per_doc);
    Ok(RunResult {
        assignment: Assignment {
            labels,
            per_doc_distortion: per_doc,
            total_distortion,
            iterations,
            converged,
        },
        centroids,
        seed,
        trace,
    })
}

/// Clips, estimates the proposal, weights and clusters with `params.seed`.
pub fn cluster(p: &LogProbMatrix, params: &Params, init: Init) -> Result<RunResult> {
    params.validate_for(p.n_docs())?;
    let prepared = prepare(p, params)?;
    cluster_prepared(&prepared.p, &prepared.w, params, init, params.seed)
}

/// Runs `params.restarts` seeds starting at `params.seed` and keeps the run
/// with the lowest total distortion (ties go to the lower seed).
pub fn cluster_best_of_prepared(
    p: &LogProbMatrix,
    w: &WeightMatrix,
    params: &Params,
    init: Init,
) -> Result<RunResult> {
    params.validate_for(p.n_docs())?;
    let runs: Vec<Result<RunResult>> = (0..params.restarts as u64)
        .into_par_iter()
        .map(|r| cluster_prepared(p, w, params, init, params.seed.wrapping_add(r)))
        .collect();
    let mut best: Option<RunResult> = None;
    for run in runs {
        let run = run?;
        let better = best
            .as_ref()
            .is_none_or(|b| run.assignment.total_distortion < b.assignment.total_distortion);
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

pub fn cluster_best_of(p: &LogProbMatrix, params: &Params, init: Init) -> Result<RunResult> {
    params.validate_for(p.n_docs())?;
    let prepared = prepare(p, params)?;
    cluster_best_of_prepared(&prepared.p, &prepared.w, params, init)
}
