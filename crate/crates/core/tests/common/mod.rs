#![allow(dead_code)]

use gamc::graph::Label;
use gamc::{PropagationGraph, SplitMix64, Tensor2};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn uniform(rng: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

/// Random simple undirected graph on `n` nodes with edge probability `p`.
pub fn random_edges(rng: &mut SplitMix64, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push(if rng.random_bool(0.5) { (i, j) } else { (j, i) });
            }
        }
    }
    edges
}

/// Random tree: node `i > 0` hangs off a uniformly chosen earlier node.
pub fn random_tree(rng: &mut SplitMix64, n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (rng.random_range(0..i), i)).collect()
}

pub fn random_graph(rng: &mut SplitMix64, id: &str, n: usize, dim: usize) -> PropagationGraph {
    let edges = if rng.random_bool(0.5) {
        random_tree(rng, n)
    } else {
        random_edges(rng, n, 0.4)
    };
    let label = if rng.random_bool(0.5) { Label::Fake } else { Label::Real };
    PropagationGraph::new(id, edges, uniform(rng, n, dim, 1.0), Some(label)).unwrap()
}

pub fn random_permutation(rng: &mut SplitMix64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Dense `A` with `A[i][j] = 1` for each undirected edge.
pub fn dense_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j) in edges {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    a
}

pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>], inner: usize, cols: usize) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn to_rows(t: &Tensor2) -> Vec<Vec<f64>> {
    t.row_iter().map(|r| r.to_vec()).collect()
}

/// `|a - n| / (max(|a|, |n|) + floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()) + floor)
}

use gamc::objective::LossConfig;
use gamc::training::{batch_gradients, batch_objective, ViewSet};
use gamc::{ModelParams, TrainConfig};

/// Shifts every parameter entry, including biases, epsilons and tokens, by a
/// uniform offset so no unit sits exactly on a ReLU kink.
pub fn jitter_params(params: &mut ModelParams, rng: &mut SplitMix64, scale: f64) {
    for (_, t) in params.named_tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

/// Largest relative error between the analytic gradient of the batch loss
/// and a central finite difference, over every parameter entry.
pub fn full_loss_gradcheck(
    params: &ModelParams,
    cfg: &TrainConfig,
    graphs: &[PropagationGraph],
    view_seed: u64,
    step: f64,
) -> (f64, usize) {
    let loss_cfg: LossConfig = cfg.loss_config();
    let token = params.mask_token.data().to_vec();
    let views = ViewSet::sample(graphs.iter().collect(), cfg, &token, |k| {
        SplitMix64::new(view_seed).fork(k as u64)
    })
    .unwrap();
    let analytic = batch_gradients(params, &loss_cfg, &views).unwrap().grads;
    let mut probe = params.clone();
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (k, name) in names.iter().enumerate() {
        let len = params.named_tensors()[k].1.len();
        for e in 0..len {
            let orig = params.named_tensors()[k].1.data()[e];
            probe.named_tensors_mut()[k].1.data_mut()[e] = orig + step;
            let up = batch_objective(&probe, &loss_cfg, &views).unwrap().l_total;
            probe.named_tensors_mut()[k].1.data_mut()[e] = orig - step;
            let down = batch_objective(&probe, &loss_cfg, &views).unwrap().l_total;
            probe.named_tensors_mut()[k].1.data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[name].data()[e];
            worst = worst.max(rel_err(a, numeric, 1e-6));
            checked += 1;
        }
    }
    (worst, checked)
}
