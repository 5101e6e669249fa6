//! Hierarchical clustering with sub-cluster-localized proposals and the
//! prefix-code document index built from the resulting tree.
//!
//! Inside a sub-cluster the proposal is re-estimated on its own documents. New
//! texts are obtained without rescoring by bootstrapping the original sampled
//! columns with weights `r_j = (phi_local_j / phi_j)^alpha`, and the weights of
//! the resampled matrix are taken against the localized proposal.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{cluster_best_of_prepared, RunResult};
use crate::error::{Error, Result};
use crate::io::CodeRecord;
use crate::logmath::logsumexp;
use crate::matrix::LogProbMatrix;
use crate::params::{Init, Params};
use crate::preprocess::{clip_log_probs, compute_weights, proposal_for, Proposal};
use crate::seeding::{derive_seed, rng_for};

/// Bootstrap weights over the original texts.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleWeights {
    pub r: Vec<f64>,
    pub normalized_r: Vec<f64>,
}

/// `r_j = exp(alpha * (log phi_local_j - log phi_j))`; `normalized_r` is
/// computed in log domain so it stays well defined when some `r_j` underflow.
pub fn resample_weights(phi: &Proposal, phi_local: &Proposal, alpha: f64) -> Result<ResampleWeights> {
    if phi.len() != phi_local.len() {
        return Err(Error::LengthMismatch {
            left: phi.len(),
            right: phi_local.len(),
        });
    }
    let log_r: Vec<f64> = phi_local
        .log_phi
        .iter()
        .zip(&phi.log_phi)
        .map(|(l, g)| alpha * (l - g))
        .collect();
    let r: Vec<f64> = log_r.iter().map(|v| v.exp()).collect();
    let sum: f64 = r.iter().sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::DegenerateResampleWeights);
    }
    let lse = logsumexp(&log_r);
    let normalized_r = log_r.iter().map(|v| (v - lse).exp()).collect();
    Ok(ResampleWeights { r, normalized_r })
}

/// `count` i.i.d. column indices drawn from `normalized_r`, with replacement.
pub fn bootstrap_texts<R: Rng + ?Sized>(weights: &ResampleWeights, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(&weights.normalized_r).map_err(|_| Error::DegenerateResampleWeights)?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Result of clustering one sub-cluster.
#[derive(Debug, Clone)]
pub struct SubsetRun {
    /// Labels are indexed like `rows`.
    pub run: RunResult,
    pub rows: Vec<usize>,
    /// Resampled column indices into the parent matrix.
    pub columns: Vec<usize>,
    pub phi_local: Proposal,
}

/// Clusters the documents `rows` of an already clipped `p`.
///
/// `base_phi` is the proposal the columns of `p` were sampled from. With
/// `localized` the proposal is re-estimated on `rows` and columns are
/// bootstrapped toward it; without it `base_phi` is kept and the bootstrap
/// is uniform.
pub fn cluster_subset(
    p: &LogProbMatrix,
    rows: &[usize],
    params: &Params,
    base_phi: &Proposal,
    localized: bool,
    init: Init,
    seed: u64,
) -> Result<SubsetRun> {
    if rows.len() < params.k {
        return Err(Error::TooManyClusters {
            k: params.k,
            n: rows.len(),
        });
    }
    let phi_local = if localized {
        proposal_for(p, params, Some(rows))?
    } else {
        base_phi.clone()
    };
    let weights = resample_weights(base_phi, &phi_local, params.alpha)?;
    let count = params.resample_size.unwrap_or(p.n_texts());
    let mut rng = rng_for(seed, &[u64::MAX]);
    let columns = bootstrap_texts(&weights, count, &mut rng)?;
    let sub_p = p.select(rows, &columns);
    let sub_w = compute_weights(&sub_p, &phi_local.select(&columns), params.alpha)?;
    let sub_params = Params {
        seed,
        ..params.clone()
    };
    let run = cluster_best_of_prepared(&sub_p, &sub_w, &sub_params, init)?;
    Ok(SubsetRun {
        run,
        rows: rows.to_vec(),
        columns,
        phi_local,
    })
}

/// Node of the cluster tree; `rows` index the original matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierNode {
    pub depth: usize,
    /// Cluster index under the parent (0 for the root).
    pub index: usize,
    pub rows: Vec<usize>,
    pub children: Vec<HierNode>,
}

impl HierNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn leaves(&self) -> Vec<&HierNode> {
        if self.is_leaf() {
            vec![self]
        } else {
            self.children.iter().flat_map(|c| c.leaves()).collect()
        }
    }

    pub fn depth_max(&self) -> usize {
        self.children.iter().map(|c| c.depth_max()).max().unwrap_or(self.depth)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }
}

/// Options for [`build_tree`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeOptions {
    pub leaf_threshold: usize,
    pub localized: bool,
    pub init: Init,
}

impl TreeOptions {
    pub fn new(leaf_threshold: usize) -> Self {
        Self {
            leaf_threshold,
            localized: true,
            init: Init::Random,
        }
    }
}

/// Recursively clusters `p` into a tree. The root split is flat clustering on
/// all texts; deeper splits use [`cluster_subset`]. A node with at most
/// `max(leaf_threshold, K)` documents is a leaf, as is a node whose split
/// would put every document in one child.
pub fn build_tree(p: &LogProbMatrix, params: &Params, opts: &TreeOptions) -> Result<HierNode> {
    params.validate()?;
    if opts.leaf_threshold == 0 {
        return Err(Error::InvalidParam("leaf_threshold must be at least 1".into()));
    }
    let p = match params.clip_sigmas {
        Some(s) => clip_log_probs(p, s).0,
        None => p.clone(),
    };
    let phi = proposal_for(&p, params, None)?;
    let rows: Vec<usize> = (0..p.n_docs()).collect();
    grow(&p, &phi, params, opts, rows, Vec::new())
}

fn grow(
    p: &LogProbMatrix,
    phi: &Proposal,
    params: &Params,
    opts: &TreeOptions,
    rows: Vec<usize>,
    path: Vec<u64>,
) -> Result<HierNode> {
    let depth = path.len();
    let index = path.last().map_or(0, |&i| i as usize);
    let stop = opts.leaf_threshold.max(params.k);
    if rows.len() <= stop {
        return Ok(HierNode {
            depth,
            index,
            rows,
            children: Vec::new(),
        });
    }
    let seed = derive_seed(params.seed, &path);
    let labels = if depth == 0 {
        let w = compute_weights(p, phi, params.alpha)?;
        let root_params = Params {
            seed,
            ..params.clone()
        };
        cluster_best_of_prepared(p, &w, &root_params, opts.init)?.assignment.labels
    } else {
        cluster_subset(p, &rows, params, phi, opts.localized, opts.init, seed)?
            .run
            .assignment
            .labels
    };
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); params.k];
    for (pos, &l) in labels.iter().enumerate() {
        groups[l].push(rows[pos]);
    }
    if groups.iter().any(|g| g.len() == rows.len()) {
        log::warn!("split at depth {depth} left every document in one cluster; stopping");
        return Ok(HierNode {
            depth,
            index,
            rows,
            children: Vec::new(),
        });
    }
    let children = groups
        .into_par_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(c, g)| {
            let mut child_path = path.clone();
            child_path.push(c as u64);
            grow(p, phi, params, opts, g, child_path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HierNode {
        depth,
        index,
        rows,
        children,
    })
}

/// A document's semantic identifier: cluster indices from the root, then its
/// ordinal within the leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrefixCode {
    pub row: usize,
    pub doc_id: String,
    pub digits: Vec<usize>,
    pub ordinal: usize,
}

impl PrefixCode {
    pub fn code(&self) -> Vec<usize> {
        let mut c = self.digits.clone();
        c.push(self.ordinal);
        c
    }

    pub fn to_record(&self) -> CodeRecord {
        CodeRecord {
            doc_id: self.doc_id.clone(),
            code: self.code(),
        }
    }
}

/// Codes for every document in the tree, ordered by original row. Leaf
/// ordinals follow ascending row order.
pub fn assign_prefix_codes(tree: &HierNode, doc_ids: &[String]) -> Vec<PrefixCode> {
    let mut out = Vec::new();
    collect_codes(tree, &mut Vec::new(), doc_ids, &mut out);
    out.sort_by_key(|c| c.row);
    out
}

fn collect_codes(node: &HierNode, digits: &mut Vec<usize>, doc_ids: &[String], out: &mut Vec<PrefixCode>) {
    if node.is_leaf() {
        let mut rows = node.rows.clone();
        rows.sort_unstable();
        for (ordinal, row) in rows.into_iter().enumerate() {
            out.push(PrefixCode {
                row,
                doc_id: doc_ids.get(row).cloned().unwrap_or_else(|| row.to_string()),
                digits: digits.clone(),
                ordinal,
            });
        }
        return;
    }
    for child in &node.children {
        digits.push(child.index);
        collect_codes(child, digits, doc_ids, out);
        digits.pop();
    }
}

/// Flattened description of the tree for the summary file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeSummary {
    pub n_docs: usize,
    pub n_nodes: usize,
    pub n_leaves: usize,
    pub max_depth: usize,
    pub nodes: Vec<NodeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSummary {
    pub path: Vec<usize>,
    pub depth: usize,
    pub size: usize,
    pub is_leaf: bool,
}

pub fn summarize(tree: &HierNode) -> TreeSummary {
    fn walk(node: &HierNode, path: &mut Vec<usize>, out: &mut Vec<NodeSummary>) {
        out.push(NodeSummary {
            path: path.clone(),
            depth: node.depth,
            size: node.rows.len(),
            is_leaf: node.is_leaf(),
        });
        for c in &node.children {
            path.push(c.index);
            walk(c, path, out);
            path.pop();
        }
    }
    let mut nodes = Vec::new();
    walk(tree, &mut Vec::new(), &mut nodes);
    TreeSummary {
        n_docs: tree.rows.len(),
        n_nodes: nodes.len(),
        n_leaves: tree.leaves().len(),
        max_depth: tree.depth_max(),
        nodes,
    }
}
