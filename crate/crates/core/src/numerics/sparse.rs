use crate::error::{GamcError, Result};
use crate::graph::AdjacencyCsr;
use crate::numerics::Tensor2;

/// Neighbor aggregation: row `i` of the result is the sum of the rows of `h`
/// over the neighbors of `i`. Isolated nodes yield a zero row.
pub fn spmm_neighbors(adj: &AdjacencyCsr, h: &Tensor2) -> Result<Tensor2> {
    let n = adj.num_nodes();
    if h.rows() != n {
        return Err(GamcError::shape("spmm_neighbors", (n, n), h.shape()));
    }
    let mut out = Tensor2::zeros(n, h.cols());
    spmm_accumulate(adj, h, &mut out)?;
    Ok(out)
}

/// `out += A * h`.
pub(crate) fn spmm_accumulate(adj: &AdjacencyCsr, h: &Tensor2, out: &mut Tensor2) -> Result<()> {
    let n = adj.num_nodes();
    for i in 0..n {
        for &j in adj.neighbors(i) {
            if j >= n {
                return Err(GamcError::CorruptGraph(format!("neighbor index {j} out of range for {n} nodes")));
            }
            let src = h.row(j);
            for (o, s) in out.row_mut(i).iter_mut().zip(src) {
                *o += s;
            }
        }
    }
    Ok(())
}
