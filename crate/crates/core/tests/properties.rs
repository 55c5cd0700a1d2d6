mod common;

use std::collections::BTreeMap;

use common::*;
use gamc::augment::{drop_edges, make_views, mask_features, masked_count, AugmentConfig};
use gamc::encoder::{embed_clean, Embedding, EncoderParams};
use gamc::evaluation::{split_stratified, train_svm, Metrics, SvmConfig};
use gamc::graph::{edge_set, write_dataset, Label};
use gamc::numerics::{AdamConfig, AdamState};
use gamc::objective::contrast_loss;
use gamc::{load_dataset, AdjacencyCsr, Dataset, SplitMix64, Tensor2};
use proptest::prelude::*;
use rand::Rng;

fn dataset(seed: u64, n: usize, dim: usize) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let graphs = (0..n)
        .map(|i| {
            let nodes = rng.random_range(1..=8);
            random_graph(&mut rng, &format!("g{i}"), nodes, dim)
        })
        .collect();
    Dataset::new("prop", graphs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embeddings_ignore_node_order(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = SplitMix64::new(seed);
        let params = EncoderParams::new(4, 16, &mut rng);
        let g = random_graph(&mut rng, "g", n, 4);
        let perm = random_permutation(&mut rng, n);
        let p = g.permuted(&perm).unwrap();
        let a = embed_clean(&params, &g).unwrap();
        let b = embed_clean(&params, &p).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
        // node-level outputs permute with the nodes
        let h = params.node_embeddings(&g.to_csr(), &g.features).unwrap();
        let hp = params.node_embeddings(&p.to_csr(), &p.features).unwrap();
        for (i, &old) in perm.iter().enumerate() {
            for (x, y) in hp.row(i).iter().zip(h.row(old)) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn augmentation_counts_and_partition(seed in any::<u64>(), n in 1usize..=12, lambda in 0.0f64..=1.0, gamma in 0.0f64..=1.0) {
        let mut rng = SplitMix64::new(seed);
        let g = random_graph(&mut rng, "g", n, 2);
        let (x, masked) = mask_features(&g, lambda, &[9.0, 9.0], &mut rng.fork(1)).unwrap();
        prop_assert_eq!(masked.len(), masked_count(n, lambda));
        prop_assert!(masked.windows(2).all(|w| w[0] < w[1]));
        for i in 0..n {
            if masked.binary_search(&i).is_err() {
                prop_assert_eq!(x.row(i), g.features.row(i));
            }
        }
        let (kept, dropped) = drop_edges(&g, gamma, &mut rng.fork(2));
        prop_assert_eq!(dropped.len(), (gamma * g.num_edges() as f64 + 1e-9).floor() as usize);
        let mut union = edge_set(&kept);
        union.extend(edge_set(&dropped));
        prop_assert_eq!(union, edge_set(&g.edges));
        prop_assert_eq!(kept.len() + dropped.len(), g.num_edges());
    }

    #[test]
    fn views_never_change_the_node_set(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = SplitMix64::new(seed);
        let g = random_graph(&mut rng, "g", n, 3);
        let (a, b) = make_views(&g, &AugmentConfig::default(), &[0.0; 3], &rng).unwrap();
        prop_assert_eq!(a.graph.num_nodes(), n);
        prop_assert_eq!(b.graph.num_nodes(), n);
        prop_assert!(edge_set(&a.graph.edges).is_subset(&edge_set(&g.edges)));
    }

    #[test]
    fn ndjson_round_trip_is_exact(seed in any::<u64>()) {
        let ds = dataset(seed, 5, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ndjson");
        gamc::save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        prop_assert_eq!(back.graphs(), ds.graphs());
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_dataset(&ds, &mut a).unwrap();
        write_dataset(&back, &mut b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn csr_is_symmetric_and_sorted(seed in any::<u64>(), n in 1usize..=9) {
        let mut rng = SplitMix64::new(seed);
        let edges = random_edges(&mut rng, n, 0.5);
        let adj = AdjacencyCsr::from_edges(n, &edges).unwrap();
        prop_assert_eq!(adj.num_edges(), edges.len());
        for i in 0..n {
            prop_assert!(adj.neighbors(i).windows(2).all(|w| w[0] < w[1]));
            for &j in adj.neighbors(i) {
                prop_assert!(adj.neighbors(j).contains(&i));
            }
        }
        let rebuilt = AdjacencyCsr::from_raw(adj.offsets().to_vec(), adj.indices().to_vec()).unwrap();
        prop_assert_eq!(rebuilt, adj);
    }

    #[test]
    fn stratified_split_partitions(seed in any::<u64>(), frac in 0.1f64..0.9) {
        let ds = dataset(seed % 1000, 23, 1);
        let (train, test) = split_stratified(&ds, frac, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        for label in [Label::Fake, Label::Real] {
            let total = ds.graphs().iter().filter(|g| g.label == Some(label)).count();
            let in_train = train.iter().filter(|&&i| ds.graphs()[i].label == Some(label)).count();
            prop_assert!((in_train as f64 - frac * total as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn cosine_is_bounded_and_scale_free(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = SplitMix64::new(seed);
        let a = uniform(&mut rng, 4, 3, 1.0);
        let b = uniform(&mut rng, 4, 3, 1.0);
        let s = contrast_loss(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
        prop_assert!((contrast_loss(&b, &a).unwrap() - s).abs() < 1e-15);
        prop_assert!((contrast_loss(&a.scale(c), &b).unwrap() - s).abs() < 1e-12);
    }
}

#[test]
fn metrics_match_confusion_oracle() {
    let mut rng = SplitMix64::new(20);
    for _ in 0..20 {
        let n = rng.random_range(1..30);
        let pick = |rng: &mut SplitMix64| if rng.random_bool(0.5) { Label::Fake } else { Label::Real };
        let truth: Vec<Label> = (0..n).map(|_| pick(&mut rng)).collect();
        let pred: Vec<Label> = (0..n).map(|_| pick(&mut rng)).collect();
        let mut counts = BTreeMap::new();
        for (t, p) in truth.iter().zip(&pred) {
            *counts.entry((t.as_str(), p.as_str())).or_insert(0usize) += 1;
        }
        let c = |t, p| *counts.get(&(t, p)).unwrap_or(&0) as f64;
        let (tp, fp, tn, fn_) = (c("fake", "fake"), c("real", "fake"), c("real", "real"), c("fake", "real"));
        let m = Metrics::from_predictions(&truth, &pred).unwrap();
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        assert_eq!(m.accuracy, (tp + tn) / n as f64);
        assert_eq!((m.precision, m.recall), (prec, rec));
        assert!((m.f1 - f1).abs() < 1e-15);
        assert_eq!(m.tp + m.fp + m.tn + m.fn_, n);
    }
}

fn separable(rng: &mut SplitMix64, n: usize, dim: usize) -> (Vec<Embedding>, Vec<Label>) {
    let mut emb = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = if i % 2 == 0 { Label::Fake } else { Label::Real };
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        v[0] = label.sign() * rng.random_range(0.5..2.0);
        emb.push(Embedding(v));
        labels.push(label);
    }
    (emb, labels)
}

#[test]
fn svm_separates_separable_embeddings() {
    let mut rng = SplitMix64::new(31);
    let (emb, labels) = separable(&mut rng, 200, 16);
    let svm = train_svm(&emb, &labels, &SvmConfig::default()).unwrap();
    let correct = emb.iter().zip(&labels).filter(|(e, l)| svm.predict(&e.0) == **l).count();
    assert!(correct as f64 / 200.0 >= 0.99, "{correct}");
    assert!(svm.weights.iter().all(|w| w.is_finite()));
}

#[test]
fn svm_duplicate_point_keeps_confident_predictions() {
    let mut rng = SplitMix64::new(32);
    let (emb, labels) = separable(&mut rng, 60, 4);
    let base = train_svm(&emb, &labels, &SvmConfig::default()).unwrap();
    let (test, _) = separable(&mut rng, 40, 4);
    for k in 0..5 {
        let mut e2 = emb.clone();
        let mut l2 = labels.clone();
        e2.push(emb[k].clone());
        l2.push(labels[k]);
        let dup = train_svm(&e2, &l2, &SvmConfig::default()).unwrap();
        for t in &test {
            if base.decision(&t.0).abs() > 1.0 {
                assert_eq!(base.predict(&t.0), dup.predict(&t.0));
            }
        }
    }
}

#[test]
fn adam_matches_hand_recurrence() {
    let cfg = AdamConfig::default();
    let mut state = AdamState::new(cfg);
    let mut w = Tensor2::from_rows(&[[0.5, -1.0], [2.0, 0.0]]).unwrap();
    let grads_seq = [[0.1, -0.2, 0.3, 0.0], [1.0, 1.0, -1.0, 2.0], [-0.5, 0.0, 0.25, 1e-3]];
    let mut expected = w.data().to_vec();
    let (mut m, mut v) = (vec![0.0; 4], vec![0.0; 4]);
    for (t, g) in grads_seq.iter().enumerate() {
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor2::from_vec(2, 2, g.to_vec()).unwrap());
        state.apply([("w", &mut w)], &grads).unwrap();
        let t = (t + 1) as i32;
        for i in 0..4 {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - cfg.beta1.powi(t));
            let vh = v[i] / (1.0 - cfg.beta2.powi(t));
            expected[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    for (a, b) in w.data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
    assert_eq!(state.step_count(), 3);
}
