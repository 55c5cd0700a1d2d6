//! Two-view augmentation: random node-feature masking and edge dropping.

use rand::seq::index;

use crate::error::{GamcError, Result};
use crate::graph::PropagationGraph;
use crate::numerics::Tensor2;
use crate::rng::SplitMix64;

// Guards products like 0.29 * 100 = 28.999999999999996 against flooring
// one below the intended integer.
const COUNT_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub mask_rate: f64,
    pub edge_drop_rate: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mask_rate: 0.5,
            edge_drop_rate: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            mask_rate: 0.0,
            edge_drop_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mask rate", self.mask_rate), ("edge drop rate", self.edge_drop_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GamcError::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// One augmented copy of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedView {
    /// Masked features and the reduced edge set; node set unchanged.
    pub graph: PropagationGraph,
    /// Sorted indices of masked nodes.
    pub masked_nodes: Vec<usize>,
    pub dropped_edges: Vec<(usize, usize)>,
    /// Seed of the PRNG stream that produced this view.
    pub seed_trace: u64,
}

impl AugmentedView {
    /// The unaugmented graph as a view.
    pub fn identity(g: &PropagationGraph, seed_trace: u64) -> Self {
        AugmentedView {
            graph: g.clone(),
            masked_nodes: Vec::new(),
            dropped_edges: Vec::new(),
            seed_trace,
        }
    }
}

/// `round(rate * n)` clipped to `[0, n - 1]`, so at least one node stays
/// unmasked.
pub fn masked_count(num_nodes: usize, mask_rate: f64) -> usize {
    let k = (mask_rate * num_nodes as f64 + COUNT_SLACK).round() as usize;
    k.min(num_nodes.saturating_sub(1))
}

/// `floor(rate * m)`.
pub fn dropped_count(num_edges: usize, edge_drop_rate: f64) -> usize {
    ((edge_drop_rate * num_edges as f64 + COUNT_SLACK).floor() as usize).min(num_edges)
}

/// Replaces a uniformly sampled subset of rows with `mask_token`.
/// Returns the masked matrix and the sorted masked row indices.
pub fn mask_features(
    g: &PropagationGraph,
    mask_rate: f64,
    mask_token: &[f64],
    rng: &mut SplitMix64,
) -> Result<(Tensor2, Vec<usize>)> {
    if mask_token.len() != g.feature_dim() {
        return Err(GamcError::shape(
            "mask_features",
            (1, g.feature_dim()),
            (1, mask_token.len()),
        ));
    }
    let n = g.num_nodes();
    let k = masked_count(n, mask_rate);
    let mut masked = index::sample(rng, n, k).into_vec();
    masked.sort_unstable();
    let mut x = g.features.clone();
    for &i in &masked {
        x.row_mut(i).copy_from_slice(mask_token);
    }
    Ok((x, masked))
}

/// Removes `floor(rate * |E|)` uniformly sampled undirected edges.
/// Returns `(kept, dropped)`, both in original edge order.
pub fn drop_edges(
    g: &PropagationGraph,
    edge_drop_rate: f64,
    rng: &mut SplitMix64,
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let m = g.num_edges();
    let k = dropped_count(m, edge_drop_rate);
    let mut drop = vec![false; m];
    for i in index::sample(rng, m, k) {
        drop[i] = true;
    }
    let (dropped, kept): (Vec<_>, Vec<_>) = g.edges.iter().zip(&drop).partition(|(_, &d)| d);
    (
        kept.into_iter().map(|(e, _)| *e).collect(),
        dropped.into_iter().map(|(e, _)| *e).collect(),
    )
}

/// A single view drawn from `rng`: masking first, then edge dropping.
pub fn make_view(
    g: &PropagationGraph,
    cfg: &AugmentConfig,
    mask_token: &[f64],
    mut rng: SplitMix64,
) -> Result<AugmentedView> {
    let seed_trace = rng.seed();
    let (features, masked_nodes) = mask_features(g, cfg.mask_rate, mask_token, &mut rng)?;
    let (kept, dropped_edges) = drop_edges(g, cfg.edge_drop_rate, &mut rng);
    Ok(AugmentedView {
        graph: PropagationGraph {
            id: g.id.clone(),
            edges: kept,
            features,
            label: g.label,
        },
        masked_nodes,
        dropped_edges,
        seed_trace,
    })
}

/// Two independently sampled views from the child streams 1 and 2 of `rng`.
pub fn make_views(
    g: &PropagationGraph,
    cfg: &AugmentConfig,
    mask_token: &[f64],
    rng: &SplitMix64,
) -> Result<(AugmentedView, AugmentedView)> {
    cfg.validate()?;
    Ok((
        make_view(g, cfg, mask_token, rng.fork(1))?,
        make_view(g, cfg, mask_token, rng.fork(2))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{edge_set, Label};

    fn ring(n: usize, dim: usize) -> PropagationGraph {
        let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let mut x = Tensor2::zeros(n, dim);
        for i in 0..n {
            for d in 0..dim {
                x.set(i, d, (i * dim + d) as f64);
            }
        }
        PropagationGraph::new("ring", edges, x, Some(Label::Fake)).unwrap()
    }

    #[test]
    fn zero_rates_leave_graph_unchanged() {
        let g = ring(6, 2);
        let (a, b) = make_views(&g, &AugmentConfig::none(), &[9.0, 9.0], &SplitMix64::new(1)).unwrap();
        for v in [a, b] {
            assert_eq!(v.graph, g);
            assert!(v.masked_nodes.is_empty() && v.dropped_edges.is_empty());
        }
    }

    #[test]
    fn full_mask_keeps_one_node() {
        let g = ring(4, 1);
        let (_, masked) = mask_features(&g, 1.0, &[0.0], &mut SplitMix64::new(3)).unwrap();
        assert_eq!(masked.len(), 3);
    }

    #[test]
    fn half_mask_is_seed_deterministic() {
        let g = ring(10, 3);
        let tok = [-1.0; 3];
        let (x1, m1) = mask_features(&g, 0.5, &tok, &mut SplitMix64::new(11)).unwrap();
        let (x2, m2) = mask_features(&g, 0.5, &tok, &mut SplitMix64::new(11)).unwrap();
        assert_eq!(m1.len(), 5);
        assert_eq!((x1, m1), (x2, m2));
    }

    #[test]
    fn unmasked_rows_are_bit_identical() {
        let g = ring(9, 4);
        let (x, masked) = mask_features(&g, 0.4, &[7.0; 4], &mut SplitMix64::new(5)).unwrap();
        for i in 0..9 {
            if masked.contains(&i) {
                assert_eq!(x.row(i), &[7.0; 4]);
            } else {
                assert_eq!(x.row(i), g.features.row(i));
            }
        }
    }

    #[test]
    fn edge_drop_counts() {
        let g = ring(10, 1);
        let (kept, dropped) = drop_edges(&g, 0.0, &mut SplitMix64::new(1));
        assert_eq!((kept.len(), dropped.len()), (10, 0));
        let (kept, dropped) = drop_edges(&g, 1.0, &mut SplitMix64::new(1));
        assert_eq!((kept.len(), dropped.len()), (0, 10));
        let (kept, dropped) = drop_edges(&g, 0.2, &mut SplitMix64::new(1));
        assert_eq!(dropped.len(), 2);
        let again = drop_edges(&g, 0.2, &mut SplitMix64::new(1));
        assert_eq!((kept.clone(), dropped.clone()), again);
        let mut all = edge_set(&kept);
        all.extend(edge_set(&dropped));
        assert_eq!(all, edge_set(&g.edges));
    }

    #[test]
    fn single_node_graph_views() {
        let g = PropagationGraph::new("one", vec![], Tensor2::filled(1, 2, 1.0), None).unwrap();
        let cfg = AugmentConfig {
            mask_rate: 0.9,
            edge_drop_rate: 0.9,
        };
        let (a, b) = make_views(&g, &cfg, &[0.0, 0.0], &SplitMix64::new(2)).unwrap();
        assert_eq!(a.graph, g);
        assert_eq!(b.graph, g);
        assert!(a.masked_nodes.is_empty());
    }

    #[test]
    fn view_pair_is_reproducible() {
        let g = ring(12, 2);
        let cfg = AugmentConfig::default();
        let r = SplitMix64::new(99);
        let first = make_views(&g, &cfg, &[0.0, 0.0], &r).unwrap();
        let second = make_views(&g, &cfg, &[0.0, 0.0], &r).unwrap();
        assert_eq!(first, second);
        assert_ne!(first.0.seed_trace, first.1.seed_trace);
    }

    #[test]
    fn rejects_bad_rates() {
        let cfg = AugmentConfig {
            mask_rate: 1.5,
            edge_drop_rate: 0.0,
        };
        assert!(make_views(&ring(3, 1), &cfg, &[0.0], &SplitMix64::new(0)).is_err());
    }

    #[test]
    fn count_rules() {
        assert_eq!(masked_count(1, 1.0), 0);
        assert_eq!(masked_count(5, 0.5), 3);
        assert_eq!(masked_count(0, 0.5), 0);
        assert_eq!(dropped_count(100, 0.29), 29);
        assert_eq!(dropped_count(0, 0.5), 0);
    }
}
