//! Two-layer GIN encoder with sum pooling.
//!
//! Layer update for node `i`:
//! `h_i' = MLP((1 + eps) * h_i + sum_{j in N(i)} h_j)` where the MLP is
//! affine -> ReLU -> affine. The graph-level vector is the sum of the final
//! node embeddings.

use std::sync::Arc;

use rand::Rng;

use crate::batch::GraphBatch;
use crate::error::{GamcError, Result};
use crate::graph::{AdjacencyCsr, PropagationGraph};
use crate::numerics::{spmm_neighbors, Tape, Tensor2, Var};
use crate::rng::SplitMix64;

/// Glorot-uniform `fan_in x fan_out` matrix.
pub(crate) fn glorot(fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Tensor2 {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor2::from_vec(fan_in, fan_out, data).expect("length matches")
}

#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer {
    /// `1 x 1`.
    pub epsilon: Tensor2,
    pub w1: Tensor2,
    pub b1: Tensor2,
    pub w2: Tensor2,
    pub b2: Tensor2,
}

impl GinLayer {
    pub fn new(in_dim: usize, hidden_dim: usize, out_dim: usize, rng: &mut SplitMix64) -> Self {
        GinLayer {
            epsilon: Tensor2::scalar(0.0),
            w1: glorot(in_dim, hidden_dim, rng),
            b1: Tensor2::zeros(1, hidden_dim),
            w2: glorot(hidden_dim, out_dim, rng),
            b2: Tensor2::zeros(1, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.cols()
    }

    pub(crate) fn tensors(&self) -> [(&'static str, &Tensor2); 5] {
        [
            ("epsilon", &self.epsilon),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor2); 5] {
        [
            ("epsilon", &mut self.epsilon),
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }

    /// Untracked forward pass.
    pub fn forward(&self, adj: &AdjacencyCsr, h: &Tensor2) -> Result<Tensor2> {
        if h.cols() != self.in_dim() {
            return Err(GamcError::shape("gin_forward", (h.rows(), self.in_dim()), h.shape()));
        }
        let eps = self.epsilon.item()?;
        let mut z = spmm_neighbors(adj, h)?;
        z.axpy(1.0 + eps, h)?;
        let hidden = z.matmul(&self.w1)?.add_row(&self.b1)?.relu();
        hidden.matmul(&self.w2)?.add_row(&self.b2)
    }

    pub fn register(&self, tape: &mut Tape) -> GinVars {
        GinVars {
            epsilon: tape.leaf(self.epsilon.clone()),
            w1: tape.leaf(self.w1.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
        }
    }
}

/// A [`GinLayer`]'s parameters as tape variables.
#[derive(Clone, Copy, Debug)]
pub struct GinVars {
    pub epsilon: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl GinVars {
    pub(crate) fn vars(&self) -> [Var; 5] {
        [self.epsilon, self.w1, self.b1, self.w2, self.b2]
    }
}

/// Recorded GIN layer forward.
pub fn gin_forward(tape: &mut Tape, layer: &GinVars, adj: &Arc<AdjacencyCsr>, h: Var) -> Result<Var> {
    let (rows, cols) = tape.shape(h);
    let in_dim = tape.shape(layer.w1).0;
    if rows != adj.num_nodes() || cols != in_dim {
        return Err(GamcError::shape("gin_forward", (adj.num_nodes(), in_dim), (rows, cols)));
    }
    let one_plus_eps = tape.add_scalar(layer.epsilon, 1.0);
    let self_term = tape.scale_by(h, one_plus_eps)?;
    let neighbor_sum = tape.spmm(adj, h)?;
    let z = tape.add(self_term, neighbor_sum)?;
    let a1 = tape.matmul(z, layer.w1)?;
    let a1 = tape.add_row(a1, layer.b1)?;
    let hidden = tape.relu(a1);
    let a2 = tape.matmul(hidden, layer.w2)?;
    tape.add_row(a2, layer.b2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub layer1: GinLayer,
    pub layer2: GinLayer,
}

impl EncoderParams {
    pub fn new(feature_dim: usize, hidden_dim: usize, rng: &mut SplitMix64) -> Self {
        EncoderParams {
            layer1: GinLayer::new(feature_dim, hidden_dim, hidden_dim, rng),
            layer2: GinLayer::new(hidden_dim, hidden_dim, hidden_dim, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.layer1.in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layer2.out_dim()
    }

    /// Untracked node embeddings `H`.
    pub fn node_embeddings(&self, adj: &AdjacencyCsr, x: &Tensor2) -> Result<Tensor2> {
        let h1 = self.layer1.forward(adj, x)?;
        self.layer2.forward(adj, &h1)
    }

    pub fn register(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            layer1: self.layer1.register(tape),
            layer2: self.layer2.register(tape),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub layer1: GinVars,
    pub layer2: GinVars,
}

/// Graph-level representation: the sum of a graph's node embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Encodes a batch: masked rows of the input are replaced by `mask_token`
/// on the tape, then two GIN layers run over the batch adjacency.
///
/// Returns the node embeddings `H` and the per-graph pooled vectors
/// (`num_graphs x hidden`).
pub fn encode(tape: &mut Tape, enc: &EncoderVars, batch: &GraphBatch, mask_token: Var) -> Result<(Var, Var)> {
    let x = tape.constant(batch.inputs.clone());
    let x_hat = if batch.masked_rows.is_empty() {
        x
    } else {
        tape.replace_rows(x, &batch.masked_rows, mask_token)?
    };
    let h1 = gin_forward(tape, &enc.layer1, &batch.adjacency, x_hat)?;
    let h = gin_forward(tape, &enc.layer2, &batch.adjacency, h1)?;
    let pooled = tape.segment_sum(h, &batch.segments)?;
    Ok((h, pooled))
}

/// Inference-time embedding of an unaugmented graph.
pub fn embed_clean(params: &EncoderParams, g: &PropagationGraph) -> Result<Embedding> {
    check_dim(params, g)?;
    let h = params.node_embeddings(&g.to_csr(), &g.features)?;
    Ok(Embedding(h.row_sum().into_data()))
}

/// [`embed_clean`] for many graphs, batched in chunks of `chunk` graphs.
pub fn embed_all(params: &EncoderParams, graphs: &[PropagationGraph], chunk: usize) -> Result<Vec<Embedding>> {
    let mut out = Vec::with_capacity(graphs.len());
    for part in graphs.chunks(chunk.max(1)) {
        for g in part {
            check_dim(params, g)?;
        }
        let refs: Vec<&PropagationGraph> = part.iter().collect();
        let batch = GraphBatch::from_graphs(&refs)?;
        let h = params.node_embeddings(&batch.adjacency, &batch.inputs)?;
        let pooled = batch.segments.sum_rows(&h)?;
        out.extend(pooled.row_iter().map(|r| Embedding(r.to_vec())));
    }
    Ok(out)
}

fn check_dim(params: &EncoderParams, g: &PropagationGraph) -> Result<()> {
    if g.feature_dim() != params.feature_dim() {
        return Err(GamcError::Config(format!(
            "graph `{}` has feature_dim {} but the model expects {}",
            g.id,
            g.feature_dim(),
            params.feature_dim()
        )));
    }
    Ok(())
}
