//! External clustering metrics: accuracy under the best label matching,
//! normalized mutual information (geometric-mean normalization) and the
//! adjusted Rand index.

mod assignment;

pub use assignment::{linear_assignment, Matching, Objective};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Cluster labels; values need not be contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling(Vec<usize>);

impl Labeling {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("labeling"));
        }
        Ok(Self(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of distinct label values.
    pub fn n_clusters(&self) -> usize {
        let mut v = self.0.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

impl TryFrom<Vec<usize>> for Labeling {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Labeling::new(v)
    }
}

/// Counts of co-occurring (truth, pred) label pairs; rows follow sorted truth
/// values, columns sorted predicted values.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub counts: Vec<u64>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

fn dense_codes(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    for &l in labels {
        map.entry(l).or_insert(0usize);
    }
    for (idx, slot) in map.values_mut().enumerate() {
        *slot = idx;
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

impl ContingencyTable {
    pub fn new(truth: &Labeling, pred: &Labeling) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch {
                left: truth.len(),
                right: pred.len(),
            });
        }
        let (t, n_rows) = dense_codes(truth.as_slice());
        let (p, n_cols) = dense_codes(pred.as_slice());
        let mut counts = vec![0u64; n_rows * n_cols];
        for (a, b) in t.iter().zip(&p) {
            counts[a * n_cols + b] += 1;
        }
        let row_sums = (0..n_rows)
            .map(|r| counts[r * n_cols..(r + 1) * n_cols].iter().sum())
            .collect();
        let col_sums = (0..n_cols)
            .map(|c| (0..n_rows).map(|r| counts[r * n_cols + c]).sum())
            .collect();
        Ok(Self {
            counts,
            n_rows,
            n_cols,
            row_sums,
            col_sums,
            n: truth.len() as u64,
        })
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.n_cols + c]
    }

    /// True when both labelings induce the same partition.
    pub fn is_identical_partition(&self) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|r| {
                (0..self.n_cols).filter(|&c| self.get(r, c) > 0).count() == 1
            })
            && (0..self.n_cols).all(|c| (0..self.n_rows).filter(|&r| self.get(r, c) > 0).count() == 1)
    }
}

/// Fraction of documents correctly labeled under the best one-to-one matching
/// of predicted to true clusters. Unmatched clusters contribute nothing.
pub fn accuracy(truth: &Labeling, pred: &Labeling) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    let cost: Vec<f64> = table.counts.iter().map(|&c| c as f64).collect();
    let m = linear_assignment(&cost, table.n_rows, table.n_cols, Objective::Max)?;
    Ok(m.objective / table.n as f64)
}

fn entropy(marginals: &[u64], n: f64) -> f64 {
    marginals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the square root of the product of entropies.
///
/// When either labeling has zero entropy the result is 1 for identical
/// partitions and 0 otherwise.
pub fn nmi(truth: &Labeling, pred: &Labeling) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    let n = t.n as f64;
    let h_true = entropy(&t.row_sums, n);
    let h_pred = entropy(&t.col_sums, n);
    if h_true == 0.0 || h_pred == 0.0 {
        return Ok(if t.is_identical_partition() { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for r in 0..t.n_rows {
        for c in 0..t.n_cols {
            let nij = t.get(r, c);
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * (n * nij / (t.row_sums[r] as f64 * t.col_sums[c] as f64)).ln();
        }
    }
    Ok((mi / (h_true * h_pred).sqrt()).clamp(0.0, 1.0))
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Hubert-Arabie adjusted Rand index.
pub fn ari(truth: &Labeling, pred: &Labeling) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.n < 2 {
        return Err(Error::InvalidParam("adjusted Rand index needs at least 2 items".into()));
    }
    let index: f64 = t.counts.iter().map(|&c| comb2(c)).sum();
    let a: f64 = t.row_sums.iter().map(|&c| comb2(c)).sum();
    let b: f64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = a * b / comb2(t.n);
    let max = (a + b) / 2.0;
    let denom = max - expected;
    if denom == 0.0 {
        // only reachable when both labelings are all-singletons or both a single cluster
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// The three metrics together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn score(truth: &Labeling, pred: &Labeling) -> Result<Scores> {
    Ok(Scores {
        acc: accuracy(truth, pred)?,
        nmi: nmi(truth, pred)?,
        ari: ari(truth, pred)?,
    })
}
