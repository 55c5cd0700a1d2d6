//! Re-masking and the GIN decoder that maps hidden states back to feature
//! space.

use std::sync::Arc;

use crate::encoder::{gin_forward, GinLayer, GinVars};
use crate::error::{GamcError, Result};
use crate::graph::AdjacencyCsr;
use crate::numerics::{Tape, Tensor2, Var};
use crate::rng::SplitMix64;

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    /// `1 x hidden`, distinct from the encoder-side mask token.
    pub remask_token: Tensor2,
    /// The last layer maps to `feature_dim`; any earlier ones stay at `hidden`.
    pub layers: Vec<GinLayer>,
}

impl DecoderParams {
    pub fn new(hidden_dim: usize, feature_dim: usize, num_layers: usize, rng: &mut SplitMix64) -> Result<Self> {
        if num_layers == 0 {
            return Err(GamcError::Config("decoder needs at least one layer".into()));
        }
        let layers = (0..num_layers)
            .map(|i| {
                let out = if i + 1 == num_layers { feature_dim } else { hidden_dim };
                GinLayer::new(hidden_dim, hidden_dim, out, rng)
            })
            .collect();
        Ok(DecoderParams {
            remask_token: Tensor2::zeros(1, hidden_dim),
            layers,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, GinLayer::out_dim)
    }

    pub fn register(&self, tape: &mut Tape) -> DecoderVars {
        DecoderVars {
            remask_token: tape.leaf(self.remask_token.clone()),
            layers: self.layers.iter().map(|l| l.register(tape)).collect(),
        }
    }

    /// Untracked decode of an already re-masked `h_hat`.
    pub fn forward(&self, adj: &AdjacencyCsr, h_hat: &Tensor2) -> Result<Tensor2> {
        let mut h = h_hat.clone();
        for layer in &self.layers {
            h = layer.forward(adj, &h)?;
        }
        Ok(h)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderVars {
    pub remask_token: Var,
    pub layers: Vec<GinVars>,
}

/// Replaces the rows of `h` listed in `masked` by `token`.
pub fn remask(tape: &mut Tape, h: Var, masked: &[usize], token: Var) -> Result<Var> {
    if masked.is_empty() {
        return Ok(h);
    }
    tape.replace_rows(h, masked, token)
}

/// Reconstructs features from re-masked hidden states over the augmented
/// adjacency.
pub fn decode(tape: &mut Tape, dec: &DecoderVars, adj: &Arc<AdjacencyCsr>, h_hat: Var) -> Result<Var> {
    let mut h = h_hat;
    for layer in &dec.layers {
        h = gin_forward(tape, layer, adj, h)?;
    }
    Ok(h)
}
