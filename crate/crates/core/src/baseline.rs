//! Plain Euclidean k-means (Lloyd) on matrix rows, with the same seeding and
//! best-of-restarts protocol as the generative engine. Used as a comparison
//! point, e.g. on the rows of `log P`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{random_rows, Assignment, CONVERGENCE_TOL};
use crate::error::{Error, Result};
use crate::matrix::RealMatrix;
use crate::params::{Init, Params};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Per-document distortion is the squared distance to its centroid.
    pub assignment: Assignment,
    /// Row-major `k x n_cols` centroids.
    pub centroids: Vec<f64>,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.chunks(d).enumerate() {
        let dist = sq_dist(row, c);
        if dist < best.1 {
            best = (k, dist);
        }
    }
    best
}

fn kmeanspp_seed_rows<R: Rng + ?Sized>(m: &RealMatrix, k: usize, rng: &mut R) -> Vec<usize> {
    let n = m.n_rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(m.row(i), m.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &b) in best.iter().enumerate() {
                if u < b {
                    pick = i;
                    break;
                }
                u -= b;
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(m.row(i), m.row(next)));
        }
    }
    chosen
}

fn lloyd(m: &RealMatrix, params: &Params, init: Init, seed: u64) -> Result<KMeansResult> {
    let (n, d, k) = (m.n_rows(), m.n_cols(), params.k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = match init {
        Init::Random => random_rows(n, k, &mut rng)?,
        Init::Kmeanspp => kmeanspp_seed_rows(m, k, &mut rng),
    };
    let mut centroids: Vec<f64> = rows.iter().flat_map(|&i| m.row(i).to_vec()).collect();
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let (mut labels, mut per_doc);
    loop {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = (0..n).into_par_iter().map(|i| nearest(m.row(i), &centroids, d)).collect();
        labels = assigned.iter().map(|a| a.0).collect::<Vec<_>>();
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(m.row(i)) {
                *s += v;
            }
        }
        // empty clusters take the point farthest from its centroid
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| assigned[b].1.total_cmp(&assigned[a].1).then(a.cmp(&b)));
        let mut donors = order.into_iter();
        for c in 0..k {
            if counts[c] == 0 {
                let i = donors.next().unwrap_or(0);
                sums[c * d..(c + 1) * d].copy_from_slice(m.row(i));
                counts[c] = 1;
            }
            let cnt = counts[c] as f64;
            sums[c * d..(c + 1) * d].iter_mut().for_each(|s| *s /= cnt);
        }
        centroids = sums;
        per_doc = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| sq_dist(m.row(i), &centroids[l * d..(l + 1) * d]))
            .collect::<Vec<_>>();
        let current: f64 = per_doc.iter().sum();
        if prev.is_finite() && prev - current <= CONVERGENCE_TOL * prev.abs() {
            converged = true;
            break;
        }
        if iterations >= params.max_iters {
            break;
        }
        prev = current;
    }
    let total_distortion = per_doc.iter().sum();
    Ok(KMeansResult {
        assignment: Assignment {
            labels,
            per_doc_distortion: per_doc,
            total_distortion,
            iterations,
            converged,
        },
        centroids,
        seed,
    })
}

/// Best of `params.restarts` Lloyd runs by total squared distance (ties to
/// the lower seed). Only `k`, `restarts`, `max_iters` and `seed` are used.
pub fn kmeans_rows_baseline(m: &RealMatrix, params: &Params, init: Init) -> Result<KMeansResult> {
    params.validate()?;
    if params.k > m.n_rows() {
        return Err(Error::TooManyClusters {
            k: params.k,
            n: m.n_rows(),
        });
    }
    let runs: Vec<Result<KMeansResult>> = (0..params.restarts as u64)
        .into_par_iter()
        .map(|r| lloyd(m, params, init, params.seed.wrapping_add(r)))
        .collect();
    let mut best: Option<KMeansResult> = None;
    for run in runs {
        let run = run?;
        if best
            .as_ref()
            .is_none_or(|b| run.assignment.total_distortion < b.assignment.total_distortion)
        {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ari, Labeling};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn four_points_on_a_line() {
        let m = RealMatrix::new(4, 1, vec![0.0, 0.0, 10.0, 10.0]).unwrap();
        let r = kmeans_rows_baseline(&m, &Params::with_k(2), Init::Random).unwrap();
        let l = &r.assignment.labels;
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
        assert_eq!(r.assignment.total_distortion, 0.0);
    }

    #[test]
    fn k_equal_n_has_zero_distortion() {
        let m = RealMatrix::new(5, 2, (0..10).map(|v| v as f64 * 1.7).collect()).unwrap();
        for init in [Init::Random, Init::Kmeanspp] {
            let r = kmeans_rows_baseline(&m, &Params::with_k(5), init).unwrap();
            assert_eq!(r.assignment.total_distortion, 0.0);
        }
    }

    #[test]
    fn too_many_clusters() {
        let m = RealMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            kmeans_rows_baseline(&m, &Params::with_k(3), Init::Random),
            Err(Error::TooManyClusters { .. })
        ));
    }

    #[test]
    fn gaussian_blobs_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut values = Vec::new();
        let mut truth = Vec::new();
        for i in 0..100 {
            let cx = if i < 50 { -5.0 } else { 5.0 };
            values.push(cx + noise.sample(&mut rng));
            values.push(noise.sample(&mut rng));
            truth.push(usize::from(i >= 50));
        }
        let m = RealMatrix::new(100, 2, values).unwrap();
        let r = kmeans_rows_baseline(&m, &Params::with_k(2), Init::Kmeanspp).unwrap();
        let score = ari(
            &Labeling::new(truth).unwrap(),
            &Labeling::new(r.assignment.labels).unwrap(),
        )
        .unwrap();
        assert_eq!(score, 1.0);
    }
}
