//! Command-line front end: `cluster`, `hcluster`, `eval`, `synth`, `baseline`.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.
//! Outputs never depend on the worker thread count.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::kmeans_rows_baseline;
use crate::engine::cluster_best_of;
use crate::error::{Error, Result};
use crate::hierarchy::{assign_prefix_codes, build_tree, summarize, TreeOptions};
use crate::io::{
    attach_sidecars, load_matrix, read_jsonl, read_labels, save_matrix, write_json, write_jsonl,
    write_labels, AssignmentRecord, CodeRecord, MatrixFormat, TextRecord,
};
use crate::matrix::{LogProbMatrix, RealMatrix};
use crate::metrics::{score, Labeling};
use crate::params::{Init, Params, ProposalEstimator};
use crate::preprocess::clip_log_probs;
use crate::synth::{generate_hierarchical, generate_instance, HierSynthConfig, SynthConfig};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gckit", version, about = "Generative clustering of documents from log-probability matrices")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GCKIT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flat clustering of a log-probability matrix.
    Cluster(ClusterArgs),
    /// Hierarchical clustering and prefix-code indexing.
    Hcluster(HclusterArgs),
    /// Score predicted assignments against true labels.
    Eval(EvalArgs),
    /// Write a synthetic planted-cluster instance.
    Synth(SynthArgs),
    /// Euclidean k-means on the rows of the matrix.
    Baseline(ClusterArgs),
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Flat JSON run configuration; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Matrix file (LPM1, or CSV when the extension is .csv).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long)]
    pub clip_sigmas: Option<f64>,
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub naive_proposal: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HclusterArgs {
    #[command(flatten)]
    pub base: ClusterArgs,
    /// Nodes with at most max(leaf_threshold, k) documents become leaves (default: k).
    #[arg(long)]
    pub leaf_threshold: Option<usize>,
    /// Reuse the global proposal at every level instead of a localized one.
    #[arg(long)]
    pub no_localized_phi: bool,
    /// Texts drawn per bootstrap below the root (default: matrix width).
    #[arg(long)]
    pub resample_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// True labels, one integer per line.
    #[arg(long)]
    pub truth: PathBuf,
    /// Predicted assignments (JSONL) or labels (one per line).
    #[arg(long)]
    pub pred: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 90)]
    pub n_docs: usize,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 256)]
    pub j: usize,
    #[arg(long, default_value_t = 0.0)]
    pub private_mass: f64,
    #[arg(long, default_value_t = 0.0)]
    pub floor: f64,
    /// Sub-clusters per cluster; switches to a two-level instance with
    /// `n_docs / (k * k_sub)` documents per leaf.
    #[arg(long)]
    pub k_sub: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    pub sub_spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InitArg {
    Random,
    Kmeanspp,
}

impl From<InitArg> for Init {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::Random => Init::Random,
            InitArg::Kmeanspp => Init::Kmeanspp,
        }
    }
}

/// Everything a clustering run depends on, as one flat JSON object. The
/// output directory is deliberately absent so a recorded config can be
/// replayed anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub alpha: f64,
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    pub init: Init,
    pub clip_sigmas: f64,
    pub no_clip: bool,
    pub naive_proposal: bool,
    pub max_iters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf_threshold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub localized_phi: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_size: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = Params::default();
        Self {
            input: PathBuf::new(),
            alpha: p.alpha,
            k: p.k,
            restarts: p.restarts,
            seed: p.seed,
            init: Init::Random,
            clip_sigmas: 5.0,
            no_clip: false,
            naive_proposal: false,
            max_iters: p.max_iters,
            leaf_threshold: None,
            localized_phi: None,
            resample_size: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidParam(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParam(format!("config {}: {e}", path.display())))
    }

    fn from_args(a: &ClusterArgs) -> Result<Self> {
        let mut c = match &a.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(v) = &a.input {
            c.input = v.clone();
        }
        if let Some(v) = a.alpha {
            c.alpha = v;
        }
        if let Some(v) = a.k {
            c.k = v;
        }
        if let Some(v) = a.restarts {
            c.restarts = v;
        }
        if let Some(v) = a.seed {
            c.seed = v;
        }
        if let Some(v) = a.init {
            c.init = v.into();
        }
        if let Some(v) = a.clip_sigmas {
            c.clip_sigmas = v;
        }
        if let Some(v) = a.max_iters {
            c.max_iters = v;
        }
        c.no_clip |= a.no_clip;
        c.naive_proposal |= a.naive_proposal;
        if c.input.as_os_str().is_empty() {
            return Err(Error::InvalidParam("--input is required".into()));
        }
        Ok(c)
    }

    pub fn params(&self) -> Result<Params> {
        let p = Params {
            alpha: self.alpha,
            k: self.k,
            restarts: self.restarts,
            clip_sigmas: (!self.no_clip).then_some(self.clip_sigmas),
            max_iters: self.max_iters,
            seed: self.seed,
            proposal: if self.naive_proposal {
                ProposalEstimator::Naive
            } else {
                ProposalEstimator::PowerMean
            },
            resample_size: self.resample_size,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Serialize)]
struct RunMetadata {
    command: &'static str,
    n_docs: usize,
    n_texts: usize,
    alpha: f64,
    k: usize,
    restarts: usize,
    init: Init,
    clipping: bool,
    clip_sigmas: Option<f64>,
    clipped_entries: usize,
    naive_proposal: bool,
    seed: u64,
    selected_seed: u64,
    iterations: usize,
    converged: bool,
    total_distortion: f64,
    cluster_sizes: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct TreeMetadata {
    command: &'static str,
    n_docs: usize,
    n_texts: usize,
    alpha: f64,
    k: usize,
    restarts: usize,
    init: Init,
    clipping: bool,
    naive_proposal: bool,
    seed: u64,
    leaf_threshold: usize,
    localized_phi: bool,
    resample_size: Option<usize>,
    n_nodes: usize,
    n_leaves: usize,
    max_depth: usize,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_DATA
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidParam("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Cluster(a) => cmd_cluster(&a),
        Command::Hcluster(a) => cmd_hcluster(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Baseline(a) => cmd_baseline(&a),
    })
}

fn load_input(path: &Path) -> Result<LogProbMatrix> {
    let mut m = load_matrix(path, MatrixFormat::from_path(path))?;
    attach_sidecars(&mut m, path)?;
    Ok(m)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cluster_sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

fn write_assignments(dir: &Path, doc_ids: &[String], labels: &[usize], distortion: &[f64]) -> Result<()> {
    let records: Vec<AssignmentRecord> = doc_ids
        .iter()
        .zip(labels)
        .zip(distortion)
        .map(|((id, &cluster), &distortion)| AssignmentRecord {
            doc_id: id.clone(),
            cluster,
            distortion,
        })
        .collect();
    write_jsonl(dir.join("assignments.jsonl"), &records)
}

pub fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let cfg = RunConfig::from_args(a)?;
    let params = cfg.params()?;
    let p = load_input(&cfg.input)?;
    params.validate_for(p.n_docs())?;
    log::info!("clustering {} documents over {} texts", p.n_docs(), p.n_texts());
    let clipped = params.clip_sigmas.map_or(0, |s| clip_log_probs(&p, s).1);
    let run = cluster_best_of(&p, &params, cfg.init)?;
    let asg = &run.assignment;

    create_out(&a.out)?;
    write_assignments(&a.out, p.doc_ids(), &asg.labels, &asg.per_doc_distortion)?;
    write_json(
        a.out.join("run.json"),
        &RunMetadata {
            command: "cluster",
            n_docs: p.n_docs(),
            n_texts: p.n_texts(),
            alpha: params.alpha,
            k: params.k,
            restarts: params.restarts,
            init: cfg.init,
            clipping: params.clip_sigmas.is_some(),
            clip_sigmas: params.clip_sigmas,
            clipped_entries: clipped,
            naive_proposal: cfg.naive_proposal,
            seed: params.seed,
            selected_seed: run.seed,
            iterations: asg.iterations,
            converged: asg.converged,
            total_distortion: asg.total_distortion,
            cluster_sizes: cluster_sizes(&asg.labels, params.k),
        },
    )?;
    write_json(a.out.join("config.json"), &cfg)
}

pub fn cmd_hcluster(a: &HclusterArgs) -> Result<()> {
    let mut cfg = RunConfig::from_args(&a.base)?;
    if let Some(t) = a.leaf_threshold {
        cfg.leaf_threshold = Some(t);
    }
    if a.no_localized_phi {
        cfg.localized_phi = Some(false);
    }
    if let Some(r) = a.resample_size {
        cfg.resample_size = Some(r);
    }
    let localized = cfg.localized_phi.unwrap_or(true);
    cfg.localized_phi = Some(localized);
    let leaf_threshold = cfg.leaf_threshold.unwrap_or(cfg.k);
    cfg.leaf_threshold = Some(leaf_threshold);
    let params = cfg.params()?;
    let p = load_input(&cfg.input)?;

    let opts = TreeOptions {
        leaf_threshold,
        localized,
        init: cfg.init,
    };
    let tree = build_tree(&p, &params, &opts)?;
    let codes = assign_prefix_codes(&tree, p.doc_ids());
    let summary = summarize(&tree);
    log::info!(
        "tree with {} nodes, {} leaves, depth {}",
        summary.n_nodes,
        summary.n_leaves,
        summary.max_depth
    );

    create_out(&a.base.out)?;
    let records: Vec<CodeRecord> = codes.iter().map(|c| c.to_record()).collect();
    write_jsonl(a.base.out.join("codes.jsonl"), &records)?;
    write_json(a.base.out.join("tree.json"), &summary)?;
    write_json(
        a.base.out.join("run.json"),
        &TreeMetadata {
            command: "hcluster",
            n_docs: p.n_docs(),
            n_texts: p.n_texts(),
            alpha: params.alpha,
            k: params.k,
            restarts: params.restarts,
            init: cfg.init,
            clipping: params.clip_sigmas.is_some(),
            naive_proposal: cfg.naive_proposal,
            seed: params.seed,
            leaf_threshold,
            localized_phi: localized,
            resample_size: params.resample_size,
            n_nodes: summary.n_nodes,
            n_leaves: summary.n_leaves,
            max_depth: summary.max_depth,
        },
    )?;
    write_json(a.base.out.join("config.json"), &cfg)
}

/// Predicted labels from an assignments JSONL file or a plain label file.
fn read_predictions(path: &Path) -> Result<Vec<usize>> {
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl" || e == "json");
    if is_jsonl {
        Ok(read_jsonl::<AssignmentRecord>(path)?
            .into_iter()
            .map(|r| r.cluster)
            .collect())
    } else {
        read_labels(path)
    }
}

/// Metric triple scaled to percentages and rounded to 4 decimals.
pub fn eval_json(truth: &[usize], pred: &[usize]) -> Result<String> {
    let s = score(
        &Labeling::new(truth.to_vec())?,
        &Labeling::new(pred.to_vec())?,
    )?;
    let pct = |v: f64| format!("{:.4}", 100.0 * v);
    Ok(format!(
        "{{\"acc\":{},\"nmi\":{},\"ari\":{}}}",
        pct(s.acc),
        pct(s.nmi),
        pct(s.ari)
    ))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let truth = read_labels(&a.truth)?;
    let pred = read_predictions(&a.pred)?;
    println!("{}", eval_json(&truth, &pred)?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct Truth<'a> {
    k_true: usize,
    m: usize,
    labels: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    top_labels: Option<&'a [usize]>,
    sampled_symbols: &'a [usize],
    cluster_dists: &'a [Vec<f64>],
    doc_dists: &'a [Vec<f64>],
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (instance, top) = match a.k_sub {
        None => {
            let cfg = SynthConfig {
                k_true: a.k,
                n_docs: a.n_docs,
                m: a.m,
                concentration: a.concentration,
                noise: a.noise,
                j: a.j,
                private_mass: a.private_mass,
                floor: a.floor,
            };
            (generate_instance(&cfg, &mut rng)?, None)
        }
        Some(k_sub) => {
            let leaves = a.k * k_sub;
            if leaves == 0 || a.n_docs < leaves {
                return Err(Error::InvalidParam("need n_docs >= k * k_sub >= 1".into()));
            }
            let cfg = HierSynthConfig {
                k_top: a.k,
                k_sub,
                docs_per_leaf: a.n_docs / leaves,
                m: a.m,
                concentration: a.concentration,
                sub_spread: a.sub_spread,
                noise: a.noise,
                j: a.j,
            };
            let h = generate_hierarchical(&cfg, &mut rng)?;
            (h.instance, Some(h.top_labels))
        }
    };
    create_out(&a.out)?;
    save_matrix(a.out.join("matrix.lpm"), &instance.p)?;
    let docs: Vec<TextRecord> = instance
        .p
        .doc_ids()
        .iter()
        .map(|id| TextRecord {
            id: id.clone(),
            text: id.clone(),
        })
        .collect();
    let texts: Vec<TextRecord> = instance
        .p
        .text_ids()
        .iter()
        .enumerate()
        .map(|(j, sym)| TextRecord {
            id: format!("text-{j}"),
            text: sym.clone(),
        })
        .collect();
    write_jsonl(a.out.join("docs.jsonl"), &docs)?;
    write_jsonl(a.out.join("texts.jsonl"), &texts)?;
    write_labels(a.out.join("labels.txt"), &instance.true_labels)?;
    write_json(
        a.out.join("truth.json"),
        &Truth {
            k_true: instance.k_true,
            m: instance.m,
            labels: &instance.true_labels,
            top_labels: top.as_deref(),
            sampled_symbols: &instance.sampled_text_ids,
            cluster_dists: &instance.cluster_dists,
            doc_dists: &instance.doc_dists,
        },
    )
}

pub fn cmd_baseline(a: &ClusterArgs) -> Result<()> {
    let cfg = RunConfig::from_args(a)?;
    let params = cfg.params()?;
    let p = load_input(&cfg.input)?;
    let rows = RealMatrix::from(&p);
    let res = kmeans_rows_baseline(&rows, &params, cfg.init)?;
    let asg = &res.assignment;
    create_out(&a.out)?;
    write_assignments(&a.out, p.doc_ids(), &asg.labels, &asg.per_doc_distortion)?;
    write_json(
        a.out.join("run.json"),
        &serde_json::json!({
            "command": "baseline",
            "n_docs": p.n_docs(),
            "n_texts": p.n_texts(),
            "k": params.k,
            "restarts": params.restarts,
            "init": cfg.init,
            "seed": params.seed,
            "selected_seed": res.seed,
            "iterations": asg.iterations,
            "converged": asg.converged,
            "total_distortion": asg.total_distortion,
            "cluster_sizes": cluster_sizes(&asg.labels, params.k),
        }),
    )?;
    write_json(a.out.join("config.json"), &cfg)
}
