//! Disjoint-union batching: several graphs (or views) become one block-diagonal
//! graph so each layer runs as a single dense product. Per-graph row ranges are
//! kept as [`Segments`] so losses and pooling stay per graph.

use std::sync::Arc;

use crate::augment::AugmentedView;
use crate::error::{GamcError, Result};
use crate::graph::{AdjacencyCsr, PropagationGraph};
use crate::numerics::{Segments, Tensor2};

pub struct GraphBatch {
    pub adjacency: Arc<AdjacencyCsr>,
    /// Stacked encoder inputs (masked features for views).
    pub inputs: Tensor2,
    /// Stacked original features, the reconstruction target.
    pub targets: Tensor2,
    /// Masked rows in batch coordinates, sorted.
    pub masked_rows: Vec<usize>,
    pub segments: Arc<Segments>,
}

impl GraphBatch {
    /// Batch of clean graphs: no masking, full adjacency.
    pub fn from_graphs(graphs: &[&PropagationGraph]) -> Result<Self> {
        let adjs: Vec<AdjacencyCsr> = graphs.iter().map(|g| g.to_csr()).collect();
        let feats: Vec<&Tensor2> = graphs.iter().map(|g| &g.features).collect();
        let inputs = Tensor2::vstack(&feats)?;
        Ok(GraphBatch {
            adjacency: Arc::new(AdjacencyCsr::disjoint_union(&adjs)),
            targets: inputs.clone(),
            inputs,
            masked_rows: Vec::new(),
            segments: Arc::new(Segments::from_lengths(graphs.iter().map(|g| g.num_nodes()))),
        })
    }

    /// Batch of views; `originals[k]` is the graph `views[k]` was drawn from.
    pub fn from_views(views: &[&AugmentedView], originals: &[&PropagationGraph]) -> Result<Self> {
        if views.len() != originals.len() {
            return Err(GamcError::Contract(format!(
                "{} views but {} originals",
                views.len(),
                originals.len()
            )));
        }
        let mut adjs = Vec::with_capacity(views.len());
        let mut masked_rows = Vec::new();
        let mut base = 0;
        for (v, g) in views.iter().zip(originals) {
            if v.graph.num_nodes() != g.num_nodes() {
                return Err(GamcError::Contract(format!("view of `{}` changed the node count", g.id)));
            }
            adjs.push(v.graph.to_csr());
            masked_rows.extend(v.masked_nodes.iter().map(|i| i + base));
            base += g.num_nodes();
        }
        let inputs = Tensor2::vstack(&views.iter().map(|v| &v.graph.features).collect::<Vec<_>>())?;
        let targets = Tensor2::vstack(&originals.iter().map(|g| &g.features).collect::<Vec<_>>())?;
        Ok(GraphBatch {
            adjacency: Arc::new(AdjacencyCsr::disjoint_union(&adjs)),
            inputs,
            targets,
            masked_rows,
            segments: Arc::new(Segments::from_lengths(originals.iter().map(|g| g.num_nodes()))),
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.segments.len()
    }

    pub fn num_rows(&self) -> usize {
        self.inputs.rows()
    }
}
