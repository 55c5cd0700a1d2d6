//! Synthetic propagation cascades with two feature/shape regimes.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::error::{GamcError, Result};
use crate::graph::{Dataset, Label, PropagationGraph};
use crate::numerics::Tensor2;
use crate::rng::SplitMix64;

const STREAM_CENTERS: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_GRAPHS: u64 = 3;

/// Generative parameters of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct Regime {
    /// Mean of the Poisson number of children per node.
    pub branching_mean: f64,
    /// Mean of the Poisson depth limit of a cascade.
    pub depth_mean: f64,
    pub center: Vec<f64>,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_graphs: usize,
    pub feature_dim: usize,
    /// Fraction of fake graphs.
    pub class_balance: f64,
    pub fake: Regime,
    pub real: Regime,
    /// Hard cap on cascade depth; 0 gives single-node graphs.
    pub max_depth: usize,
    pub max_nodes: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::with_separation(200, 32, 3.0, 0)
    }
}

impl SynthConfig {
    /// Regime centers at `+-(delta / 2) u` for a seeded random unit vector
    /// `u`, unit noise, so the centers are `delta` noise deviations apart.
    pub fn with_separation(num_graphs: usize, feature_dim: usize, delta: f64, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed).fork(STREAM_CENTERS);
        let mut u: Vec<f64> = (0..feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            u.iter_mut().for_each(|v| *v /= norm);
        }
        let half = delta / 2.0;
        SynthConfig {
            num_graphs,
            feature_dim,
            class_balance: 0.5,
            fake: Regime {
                branching_mean: 1.4,
                depth_mean: 2.5,
                center: u.iter().map(|v| half * v).collect(),
                noise_sigma: 1.0,
            },
            real: Regime {
                branching_mean: 1.2,
                depth_mean: 2.5,
                center: u.iter().map(|v| -half * v).collect(),
                noise_sigma: 1.0,
            },
            max_depth: 8,
            max_nodes: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GamcError::Config(m));
        if self.num_graphs == 0 || self.feature_dim == 0 || self.max_nodes == 0 {
            return bad("num_graphs, feature_dim and max_nodes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.class_balance) {
            return bad(format!("class balance must be in [0, 1], got {}", self.class_balance));
        }
        for (name, r) in [("fake", &self.fake), ("real", &self.real)] {
            if r.center.len() != self.feature_dim {
                return bad(format!("{name} center has {} entries, expected {}", r.center.len(), self.feature_dim));
            }
            if !(r.noise_sigma > 0.0 && r.noise_sigma.is_finite()) {
                return bad(format!("{name} noise sigma must be positive"));
            }
            if !(r.branching_mean >= 0.0 && r.depth_mean >= 0.0) {
                return bad(format!("{name} branching and depth means must be non-negative"));
            }
            if r.center.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} center must be finite"));
            }
        }
        if self.fake.center == self.real.center {
            return bad("regime centers must differ".into());
        }
        Ok(())
    }

    fn regime(&self, label: Label) -> &Regime {
        match label {
            Label::Fake => &self.fake,
            Label::Real => &self.real,
        }
    }
}

fn poisson(rng: &mut SplitMix64, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as usize)
}

/// Grows one cascade breadth-first from the root.
fn cascade(cfg: &SynthConfig, regime: &Regime, rng: &mut SplitMix64) -> Vec<(usize, usize)> {
    let depth_limit = poisson(rng, regime.depth_mean).min(cfg.max_depth);
    let mut edges = Vec::new();
    let mut frontier = vec![0usize];
    let mut next_id = 1;
    for depth in 0..depth_limit {
        let mut next = Vec::new();
        for &parent in &frontier {
            let mut k = poisson(rng, regime.branching_mean);
            if depth == 0 {
                k = k.max(1);
            }
            for _ in 0..k {
                if next_id >= cfg.max_nodes {
                    break;
                }
                edges.push((parent, next_id));
                next.push(next_id);
                next_id += 1;
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    edges
}

pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let root = SplitMix64::new(cfg.seed);
    let n_fake = (cfg.class_balance * cfg.num_graphs as f64).round() as usize;
    let mut labels: Vec<Label> = (0..cfg.num_graphs)
        .map(|i| if i < n_fake { Label::Fake } else { Label::Real })
        .collect();
    labels.shuffle(&mut root.fork(STREAM_LABELS));

    let graph_root = root.fork(STREAM_GRAPHS);
    let graphs = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let regime = cfg.regime(label);
            let mut rng = graph_root.fork(i as u64);
            let edges = cascade(cfg, regime, &mut rng);
            let n = edges.len() + 1;
            let noise = Normal::new(0.0, regime.noise_sigma)
                .map_err(|e| GamcError::Config(format!("noise sigma: {e}")))?;
            let mut x = Tensor2::zeros(n, cfg.feature_dim);
            for r in 0..n {
                for (v, c) in x.row_mut(r).iter_mut().zip(&regime.center) {
                    *v = c + noise.sample(&mut rng);
                }
            }
            PropagationGraph::new(format!("synth-{:05}", i + 1), edges, x, Some(label))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(format!("synth-{}", cfg.seed), graphs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::write_dataset;

    #[test]
    fn two_graphs_one_each() {
        let ds = generate(&SynthConfig::with_separation(2, 4, 3.0, 1)).unwrap();
        let s = ds.stats();
        assert_eq!((s.fake, s.real), (1, 1));
    }

    #[test]
    fn depth_cap_zero_gives_single_nodes() {
        let mut cfg = SynthConfig::with_separation(20, 4, 3.0, 1);
        cfg.max_depth = 0;
        let ds = generate(&cfg).unwrap();
        assert!(ds.graphs().iter().all(|g| g.num_nodes() == 1 && g.num_edges() == 0));
    }

    #[test]
    fn trees_and_ids() {
        let ds = generate(&SynthConfig::with_separation(30, 8, 2.0, 5)).unwrap();
        assert_eq!(ds.graphs()[0].id, "synth-00001");
        for g in ds.graphs() {
            assert_eq!(g.num_edges(), g.num_nodes() - 1);
            assert!(g.num_nodes() <= 64);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig::with_separation(15, 6, 3.0, 9);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_dataset(&generate(&cfg).unwrap(), &mut a).unwrap();
        write_dataset(&generate(&cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_equal_centers_and_bad_sigma() {
        let mut cfg = SynthConfig::with_separation(4, 3, 0.0, 0);
        assert!(generate(&cfg).is_err());
        cfg = SynthConfig::with_separation(4, 3, 1.0, 0);
        cfg.real.noise_sigma = 0.0;
        assert!(generate(&cfg).is_err());
    }
}
