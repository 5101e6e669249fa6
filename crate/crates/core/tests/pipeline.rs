use std::collections::HashSet;

use gckit::engine::{assign_all, cluster, cluster_best_of, cluster_prepared, CentroidSet};
use gckit::hierarchy::{assign_prefix_codes, build_tree, cluster_subset, HierNode, TreeOptions};
use gckit::io::{
    attach_sidecars, decode_lpm1, load_matrix, read_jsonl, write_jsonl, AssignmentRecord,
    CodeRecord, MatrixFormat, TextRecord,
};
use gckit::metrics::{ari, Labeling};
use gckit::preprocess::{prepare, proposal_for};
use gckit::synth::{generate_hierarchical, generate_instance, HierSynthConfig, SynthConfig};
use gckit::{Error, Init, LogProbMatrix, Params, WeightMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ari_of(truth: &[usize], pred: &[usize]) -> f64 {
    ari(
        &Labeling::new(truth.to_vec()).unwrap(),
        &Labeling::new(pred.to_vec()).unwrap(),
    )
    .unwrap()
}

fn two_cluster() -> gckit::synth::SyntheticInstance {
    let cfg = SynthConfig {
        k_true: 2,
        n_docs: 40,
        m: 30,
        concentration: 0.3,
        noise: 0.05,
        j: 256,
        ..SynthConfig::default()
    };
    generate_instance(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
}

#[test]
fn separable_two_clusters_recovered_exactly() {
    let inst = two_cluster();
    let run = cluster_best_of(&inst.p, &Params::with_k(2), Init::Random).unwrap();
    assert_eq!(ari_of(&inst.true_labels, &run.assignment.labels), 1.0);
    assert!(run.assignment.converged);
}

#[test]
fn best_of_is_no_worse_than_any_restart() {
    let cfg = SynthConfig {
        k_true: 4,
        n_docs: 80,
        noise: 0.6,
        j: 64,
        ..SynthConfig::default()
    };
    let inst = generate_instance(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let params = Params {
        k: 4,
        restarts: 6,
        seed: 11,
        ..Params::default()
    };
    let best = cluster_best_of(&inst.p, &params, Init::Random).unwrap();
    let prep = prepare(&inst.p, &params).unwrap();
    for s in 11..17 {
        let single = cluster_prepared(&prep.p, &prep.w, &params, Init::Random, s).unwrap();
        assert!(best.assignment.total_distortion <= single.assignment.total_distortion);
    }
    assert!((11..17).contains(&best.seed));
}

#[test]
fn restarts_beat_a_single_run_on_average() {
    let cfg = SynthConfig {
        k_true: 4,
        n_docs: 60,
        m: 40,
        noise: 0.5,
        j: 64,
        ..SynthConfig::default()
    };
    let (mut best_total, mut single_total) = (0.0, 0.0);
    for t in 0..100u64 {
        let inst = generate_instance(&cfg, &mut ChaCha8Rng::seed_from_u64(t)).unwrap();
        let single = Params {
            k: 4,
            restarts: 1,
            seed: t,
            ..Params::default()
        };
        let ten = Params {
            restarts: 10,
            ..single.clone()
        };
        single_total += cluster(&inst.p, &single, Init::Random).unwrap().assignment.total_distortion;
        best_total += cluster_best_of(&inst.p, &ten, Init::Random).unwrap().assignment.total_distortion;
    }
    assert!(best_total < single_total, "{best_total} vs {single_total}");
}

#[test]
fn too_many_clusters_is_rejected() {
    let inst = two_cluster();
    let err = cluster(&inst.p, &Params::with_k(41), Init::Random).unwrap_err();
    assert!(matches!(err, Error::TooManyClusters { .. }));
}

fn small_problem() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>)> {
    (2usize..8, 2usize..6, 1usize..4).prop_flat_map(|(n, j, k)| {
        (
            Just(n),
            Just(j),
            Just(k),
            prop::collection::vec(-8.0f64..-0.01, n * j),
            prop::collection::vec(0.05f64..1.0, k * j),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assignment_picks_the_least_distortion((n, j, k, logp, raw) in small_problem()) {
        let p = LogProbMatrix::new(n, j, logp.clone()).unwrap();
        let w = WeightMatrix::new(n, j, logp.iter().map(|v| (0.3 * v).exp()).collect()).unwrap();
        let mut values = raw;
        for c in values.chunks_mut(j) {
            let s: f64 = c.iter().sum();
            c.iter_mut().for_each(|v| *v /= s);
        }
        let centroids = CentroidSet::new(k, j, values.clone()).unwrap();
        let (labels, per_doc) = assign_all(&p, &w, &centroids).unwrap();
        for i in 0..n {
            let d: Vec<f64> = (0..k)
                .map(|c| (0..j).map(|t| w.get(i, t) * (p.get(i, t) - values[c * j + t].ln())).sum::<f64>() / j as f64)
                .collect();
            let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let first = d.iter().position(|&x| x == min).unwrap();
            prop_assert_eq!(labels[i], first);
            prop_assert!((per_doc[i] - min).abs() <= 1e-12 * min.abs().max(1.0));
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = SynthConfig {
        k_true: 3,
        n_docs: 120,
        noise: 0.4,
        j: 128,
        ..SynthConfig::default()
    };
    let inst = generate_instance(&cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let params = Params {
        k: 3,
        restarts: 5,
        ..Params::default()
    };
    let runs: Vec<_> = [1, 2, 4]
        .iter()
        .map(|&t| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
            pool.install(|| {
                let flat = cluster_best_of(&inst.p, &params, Init::Kmeanspp).unwrap();
                let tree = build_tree(&inst.p, &params, &TreeOptions::new(3)).unwrap();
                (flat.assignment, flat.centroids, flat.seed, tree)
            })
        })
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.0.labels, runs[0].0.labels);
        assert_eq!(r.0.total_distortion.to_bits(), runs[0].0.total_distortion.to_bits());
        assert_eq!(r.1, runs[0].1);
        assert_eq!(r.2, runs[0].2);
        assert_eq!(r.3, runs[0].3);
    }
}

fn two_level(seed: u64) -> gckit::synth::HierInstance {
    let cfg = HierSynthConfig {
        k_top: 2,
        k_sub: 2,
        docs_per_leaf: 10,
        m: 60,
        concentration: 0.2,
        sub_spread: 0.2,
        noise: 0.02,
        j: 512,
    };
    generate_hierarchical(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn binary_tree_respects_both_planted_levels() {
    let params = Params {
        k: 2,
        restarts: 5,
        ..Params::default()
    };
    let groups = |rows: &[usize], labels: &[usize]| rows.iter().map(|&r| labels[r]).collect::<HashSet<_>>().len();
    for seed in 0..10 {
        let h = two_level(seed);
        for localized in [true, false] {
            let opts = TreeOptions {
                localized,
                ..TreeOptions::new(10)
            };
            let tree = build_tree(&h.instance.p, &params, &opts).unwrap();
            assert_eq!(tree.children.len(), 2);
            for top in &tree.children {
                assert_eq!(groups(&top.rows, &h.top_labels), 1, "seed {seed}: top split mixes groups");
            }
            let leaves = tree.leaves();
            assert!(leaves.len() >= 4);
            for leaf in leaves {
                assert!(leaf.depth >= 2);
                assert_eq!(groups(&leaf.rows, &h.instance.true_labels), 1, "seed {seed}: leaf mixes groups");
            }
        }
    }
}

fn nodes_at_depth<'a>(node: &'a HierNode, depth: usize, out: &mut Vec<&'a HierNode>) {
    if node.depth == depth {
        out.push(node);
    } else {
        node.children.iter().for_each(|c| nodes_at_depth(c, depth, out));
    }
}

#[test]
fn depth_two_of_a_fine_tree_is_the_planted_partition() {
    let cfg = HierSynthConfig {
        k_top: 2,
        k_sub: 2,
        docs_per_leaf: 10,
        m: 60,
        concentration: 0.2,
        sub_spread: 0.5,
        noise: 0.02,
        j: 512,
    };
    let params = Params {
        k: 2,
        restarts: 5,
        ..Params::default()
    };
    for seed in 0..10 {
        let h = generate_hierarchical(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let tree = build_tree(&h.instance.p, &params, &TreeOptions::new(1)).unwrap();
        let mut level = Vec::new();
        nodes_at_depth(&tree, 2, &mut level);
        let mut found: Vec<Vec<usize>> = level.iter().map(|n| n.rows.clone()).collect();
        found.sort();
        let mut planted: Vec<Vec<usize>> = (0..4)
            .map(|g| (0..40).filter(|&i| h.instance.true_labels[i] == g).collect())
            .collect();
        planted.sort();
        assert_eq!(found, planted, "seed {seed}");
        let codes = assign_prefix_codes(&tree, h.instance.p.doc_ids());
        let prefixes: HashSet<(usize, usize)> = codes.iter().map(|c| (c.digits[0], c.digits[1])).collect();
        assert_eq!(prefixes.len(), 4);
    }
}

#[test]
fn subset_clustering_separates_subclusters() {
    let h = two_level(5);
    let params = Params {
        k: 2,
        restarts: 5,
        ..Params::default()
    };
    let prep = prepare(&h.instance.p, &params).unwrap();
    let rows: Vec<usize> = (0..h.top_labels.len()).filter(|&i| h.top_labels[i] == 1).collect();
    let sub = cluster_subset(&prep.p, &rows, &params, &prep.phi, true, Init::Random, 9).unwrap();
    assert_eq!(sub.rows, rows);
    assert_eq!(sub.columns.len(), h.instance.p.n_texts());
    let truth: Vec<usize> = rows.iter().map(|&r| h.instance.true_labels[r]).collect();
    assert_eq!(ari_of(&truth, &sub.run.assignment.labels), 1.0);
}

#[test]
fn alpha_zero_subset_is_flat_clustering_of_its_columns() {
    let h = two_level(6);
    let params = Params {
        k: 2,
        alpha: 0.0,
        clip_sigmas: None,
        restarts: 3,
        ..Params::default()
    };
    let phi = proposal_for(&h.instance.p, &params, None).unwrap();
    let rows: Vec<usize> = (0..20).collect();
    let sub = cluster_subset(&h.instance.p, &rows, &params, &phi, true, Init::Random, 4).unwrap();
    let flat = cluster_best_of(
        &h.instance.p.select(&rows, &sub.columns),
        &Params { seed: 4, ..params.clone() },
        Init::Random,
    )
    .unwrap();
    assert_eq!(sub.run.assignment.labels, flat.assignment.labels);
    assert_eq!(
        sub.run.assignment.total_distortion.to_bits(),
        flat.assignment.total_distortion.to_bits()
    );
}

#[test]
fn prefix_codes_are_unique_and_follow_the_tree() {
    for (seed, k, leaf) in [(1u64, 2, 1), (2, 3, 2), (3, 2, 6)] {
        let h = two_level(seed);
        let params = Params {
            k,
            seed,
            ..Params::default()
        };
        let tree = build_tree(&h.instance.p, &params, &TreeOptions::new(leaf)).unwrap();
        let ids = h.instance.p.doc_ids().to_vec();
        let codes = assign_prefix_codes(&tree, &ids);
        assert_eq!(codes.len(), ids.len());
        let unique: HashSet<Vec<usize>> = codes.iter().map(|c| c.code()).collect();
        assert_eq!(unique.len(), ids.len());
        for c in &codes {
            assert!(c.digits.iter().all(|&d| d < k));
            assert_eq!(c.doc_id, ids[c.row]);
            assert_eq!(*c.code().last().unwrap(), c.ordinal);
        }
        for leaf in tree.leaves() {
            let digits: HashSet<&Vec<usize>> = codes
                .iter()
                .filter(|c| leaf.rows.contains(&c.row))
                .map(|c| &c.digits)
                .collect();
            assert_eq!(digits.len(), 1, "one leaf, one digit path");
        }
    }
}

#[test]
fn planted_codes_separate_both_levels() {
    let h = two_level(4);
    let params = Params {
        k: 2,
        restarts: 5,
        ..Params::default()
    };
    let tree = build_tree(&h.instance.p, &params, &TreeOptions::new(10)).unwrap();
    let codes = assign_prefix_codes(&tree, h.instance.p.doc_ids());
    let mut by_row = vec![Vec::new(); codes.len()];
    for c in &codes {
        by_row[c.row] = c.digits.clone();
    }
    let top: Vec<usize> = by_row.iter().map(|d| d[0]).collect();
    let leaf: Vec<usize> = by_row.iter().map(|d| d[0] * 2 + d[1]).collect();
    assert_eq!(ari_of(&h.top_labels, &top), 1.0);
    assert_eq!(ari_of(&h.instance.true_labels, &leaf), 1.0);
}

#[test]
fn hand_built_lpm1_loads_bit_exactly() {
    let values = [-0.5f64, -1.25, -3.0, -0.0, -1e-300, -700.0];
    let mut bytes = b"LPM1".to_vec();
    bytes.extend_from_slice(&2u32.to_le_bytes());
    bytes.extend_from_slice(&3u32.to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.lpm");
    std::fs::write(&path, &bytes).unwrap();
    let m = load_matrix(&path, MatrixFormat::Binary).unwrap();
    assert_eq!((m.n_docs(), m.n_texts()), (2, 3));
    for (a, b) in m.values().iter().zip(values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(gckit::io::encode_lpm1(&m), bytes);

    let mut short = bytes.clone();
    short.truncate(bytes.len() - 8);
    assert!(matches!(decode_lpm1(&short), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(decode_lpm1(b"LPM2\0\0\0\0\0\0\0\0"), Err(Error::MalformedHeader(_))));
}

#[test]
fn sidecars_and_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.lpm");
    let mut m = LogProbMatrix::new(2, 2, vec![-1.0, -2.0, -3.0, -4.0]).unwrap();
    gckit::io::save_matrix(&path, &m).unwrap();
    std::fs::write(
        dir.path().join("docs.jsonl"),
        "{\"id\":\"a\",\"text\":\"first\"}\n{\"id\":\"b\",\"text\":\"second\"}\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("texts.jsonl"),
        "{\"id\":\"t0\",\"text\":\"x\"}\n{\"id\":\"t1\",\"text\":\"y\"}\n",
    )
    .unwrap();
    attach_sidecars(&mut m, &path).unwrap();
    assert_eq!(m.doc_ids(), ["a", "b"]);
    assert_eq!(m.text_ids(), ["t0", "t1"]);

    let texts: Vec<TextRecord> = read_jsonl(dir.path().join("docs.jsonl")).unwrap();
    assert_eq!(texts[1].text, "second");

    let out = dir.path().join("a.jsonl");
    let recs = vec![AssignmentRecord {
        doc_id: "a".into(),
        cluster: 1,
        distortion: 0.25,
    }];
    write_jsonl(&out, &recs).unwrap();
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "{\"doc_id\":\"a\",\"cluster\":1,\"distortion\":0.25}\n"
    );
    let codes = vec![CodeRecord {
        doc_id: "b".into(),
        code: vec![1, 0, 2],
    }];
    write_jsonl(&out, &codes).unwrap();
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "{\"doc_id\":\"b\",\"code\":[1,0,2]}\n"
    );

    std::fs::write(dir.path().join("docs.jsonl"), "{\"id\":\"a\",\"text\":\"x\"}\n").unwrap();
    assert!(attach_sidecars(&mut m, &path).is_err());
}
