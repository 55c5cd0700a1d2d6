//! Dynamic reverse-mode tape over [`Tensor2`] values.
//!
//! Every forward operation appends one node holding its output value and the
//! operation that produced it. [`Tape::backward`] walks the nodes in exact
//! reverse order, accumulating `dLoss/dNode` into a buffer whose shape always
//! equals the node's value shape. Nodes that do not depend on any tracked leaf
//! are skipped.

use std::sync::Arc;

use crate::error::{GamcError, Result};
use crate::graph::AdjacencyCsr;
use crate::numerics::sparse::spmm_accumulate;
use crate::numerics::{gemm, Tensor2, Trans};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Contiguous row ranges partitioning a matrix; segment `k` covers rows
/// `bounds[k]..bounds[k + 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    bounds: Vec<usize>,
}

impl Segments {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut bounds = vec![0];
        for l in lengths {
            bounds.push(bounds.last().unwrap() + l);
        }
        Segments { bounds }
    }

    pub fn single(rows: usize) -> Self {
        Segments { bounds: vec![0, rows] }
    }

    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_rows(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.bounds[k]..self.bounds[k + 1]
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.bounds.windows(2).map(|w| w[1] - w[0])
    }

    /// Per-segment sum of rows, `len() x cols`.
    pub fn sum_rows(&self, t: &Tensor2) -> Result<Tensor2> {
        self.check(t, "segment_sum_rows")?;
        let mut out = Tensor2::zeros(self.len(), t.cols());
        for k in 0..self.len() {
            for r in self.range(k) {
                for (o, v) in out.row_mut(k).iter_mut().zip(t.row(r)) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }

    fn check(&self, t: &Tensor2, op: &'static str) -> Result<()> {
        if t.rows() != self.total_rows() {
            return Err(GamcError::shape(op, (self.total_rows(), t.cols()), t.shape()));
        }
        Ok(())
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleBy(Var, Var),
    Relu(Var),
    ClampMin(Var, f64),
    Spmm(Arc<AdjacencyCsr>, Var),
    ReplaceRows { input: Var, rows: Arc<[usize]>, token: Var },
    SliceRows(Var, usize),
    MulRows(Var, Arc<[f64]>),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
    FrobeniusDot(Var, Var),
    FrobeniusNorm(Var),
    SegmentDot(Var, Var, Arc<Segments>),
    SegmentNorm(Var, Arc<Segments>),
    SegmentSum(Var, Arc<Segments>),
}

struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Tracked input; receives a gradient on backward.
    pub fn leaf(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Untracked input.
    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "div", |x, y| x / y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Div(a, b), rg))
    }

    /// Adds the `1 x cols` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(bias))?;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddRow(a, bias), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v + c);
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    /// `a * s` for a `1 x 1` tensor `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let factor = self.value(s).item()?;
        let value = self.value(a).scale(factor);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(value, Op::ScaleBy(a, s), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).relu();
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    /// Elementwise `max(a, floor)`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).map(|v| v.max(floor));
        let rg = self.rg(a);
        self.push(value, Op::ClampMin(a, floor), rg)
    }

    /// Neighbor-sum aggregation `A * h` over a symmetric adjacency.
    pub fn spmm(&mut self, adj: &Arc<AdjacencyCsr>, h: Var) -> Result<Var> {
        let value = super::spmm_neighbors(adj, self.value(h))?;
        let rg = self.rg(h);
        Ok(self.push(value, Op::Spmm(Arc::clone(adj), h), rg))
    }

    /// Copy of `a` with each listed row replaced by the `1 x cols` row `token`.
    pub fn replace_rows(&mut self, a: Var, rows: &[usize], token: Var) -> Result<Var> {
        let (n, c) = self.shape(a);
        let tok = self.value(token);
        if tok.shape() != (1, c) {
            return Err(GamcError::shape("replace_rows", (n, c), tok.shape()));
        }
        let mut sorted: Vec<usize> = rows.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&bad) = sorted.iter().find(|&&r| r >= n) {
            return Err(GamcError::Contract(format!("row index {bad} out of range for {n} rows")));
        }
        let mut value = self.value(a).clone();
        let tok = tok.data().to_vec();
        for &r in &sorted {
            value.row_mut(r).copy_from_slice(&tok);
        }
        let rg = self.rg(a) || self.rg(token);
        Ok(self.push(
            value,
            Op::ReplaceRows {
                input: a,
                rows: sorted.into(),
                token,
            },
            rg,
        ))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_rows(start, end)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    /// Scales row `r` of `a` by the constant `weights[r]`.
    pub fn mul_rows(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let src = self.value(a);
        if weights.len() != src.rows() {
            return Err(GamcError::shape("mul_rows", src.shape(), (weights.len(), 1)));
        }
        let mut value = src.clone();
        for (r, &w) in weights.iter().enumerate() {
            for v in value.row_mut(r) {
                *v *= w;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::MulRows(a, weights.into()), rg))
    }

    /// Column-wise sum over rows, `1 x cols`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = self.value(a).row_sum();
        let rg = self.rg(a);
        self.push(value, Op::RowSum(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor2::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(GamcError::Contract("mean of an empty tensor".into()));
        }
        let value = Tensor2::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(a);
        Ok(self.push(value, Op::Mean(a), rg))
    }

    pub fn frobenius_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = Tensor2::scalar(self.value(a).frobenius_dot(self.value(b))?);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::FrobeniusDot(a, b), rg))
    }

    /// Frobenius norm; its gradient at the zero matrix is taken as zero.
    pub fn frobenius_norm(&mut self, a: Var) -> Var {
        let value = Tensor2::scalar(self.value(a).frobenius_norm());
        let rg = self.rg(a);
        self.push(value, Op::FrobeniusNorm(a), rg)
    }

    /// Per-segment Frobenius inner product, `segments.len() x 1`.
    pub fn segment_dot(&mut self, a: Var, b: Var, segments: &Arc<Segments>) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(GamcError::shape("segment_dot", ta.shape(), tb.shape()));
        }
        segments.check(ta, "segment_dot")?;
        let mut value = Tensor2::zeros(segments.len(), 1);
        for k in 0..segments.len() {
            let mut acc = 0.0;
            for r in segments.range(k) {
                acc += ta.row(r).iter().zip(tb.row(r)).map(|(x, y)| x * y).sum::<f64>();
            }
            value.set(k, 0, acc);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::SegmentDot(a, b, Arc::clone(segments)), rg))
    }

    /// Per-segment Frobenius norm, `segments.len() x 1`.
    pub fn segment_norm(&mut self, a: Var, segments: &Arc<Segments>) -> Result<Var> {
        let ta = self.value(a);
        segments.check(ta, "segment_norm")?;
        let mut value = Tensor2::zeros(segments.len(), 1);
        for k in 0..segments.len() {
            let sq: f64 = segments.range(k).flat_map(|r| ta.row(r)).map(|x| x * x).sum();
            value.set(k, 0, sq.sqrt());
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentNorm(a, Arc::clone(segments)), rg))
    }

    /// Per-segment sum of rows, `segments.len() x cols`.
    pub fn segment_sum(&mut self, a: Var, segments: &Arc<Segments>) -> Result<Var> {
        let value = segments.sum_rows(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentSum(a, Arc::clone(segments)), rg))
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(GamcError::Contract(format!("backward needs a scalar loss, got {r}x{c}")));
        }
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    gemm(1.0, g, Trans::No, val(*b), Trans::Yes, 1.0, ga);
                }
                if let Some(gb) = acc(&self.nodes, grads, *b) {
                    gemm(1.0, val(*a), Trans::Yes, g, Trans::No, 1.0, gb);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.add_assign(g)?;
                }
                if let Some(gb) = acc(&self.nodes, grads, *b) {
                    gb.add_assign(g)?;
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.add_assign(g)?;
                }
                if let Some(gb) = acc(&self.nodes, grads, *b) {
                    gb.axpy(-1.0, g)?;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.add_assign(&g.hadamard(vb)?)?;
                }
                if let Some(gb) = acc(&self.nodes, grads, *b) {
                    gb.add_assign(&g.hadamard(va)?)?;
                }
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.add_assign(&g.zip_map(vb, "div", |x, y| x / y)?)?;
                }
                if let Some(gb) = acc(&self.nodes, grads, *b) {
                    let q = va.zip_map(vb, "div", |x, y| x / (y * y))?;
                    gb.axpy(-1.0, &g.hadamard(&q)?)?;
                }
            }
            Op::AddRow(a, bias) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.add_assign(g)?;
                }
                if let Some(gb) = acc(&self.nodes, grads, *bias) {
                    gb.add_assign(&g.row_sum())?;
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.axpy(*c, g)?;
                }
            }
            Op::AddScalar(a) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.add_assign(g)?;
                }
            }
            Op::ScaleBy(a, s) => {
                let factor = val(*s).item()?;
                let va = val(*a);
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.axpy(factor, g)?;
                }
                if let Some(gs) = acc(&self.nodes, grads, *s) {
                    gs.data_mut()[0] += g.frobenius_dot(va)?;
                }
            }
            Op::Relu(a) => {
                let va = val(*a);
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    for ((o, &x), &d) in ga.data_mut().iter_mut().zip(va.data()).zip(g.data()) {
                        if x > 0.0 {
                            *o += d;
                        }
                    }
                }
            }
            Op::ClampMin(a, floor) => {
                let va = val(*a);
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    for ((o, &x), &d) in ga.data_mut().iter_mut().zip(va.data()).zip(g.data()) {
                        if x >= *floor {
                            *o += d;
                        }
                    }
                }
            }
            Op::Spmm(adj, h) => {
                // A is symmetric, so A^T g = A g
                if let Some(gh) = acc(&self.nodes, grads, *h) {
                    spmm_accumulate(adj, g, gh)?;
                }
            }
            Op::ReplaceRows { input, rows, token } => {
                if let Some(gi) = acc(&self.nodes, grads, *input) {
                    let cols = g.cols();
                    let mut k = 0;
                    for r in 0..g.rows() {
                        if k < rows.len() && rows[k] == r {
                            k += 1;
                            continue;
                        }
                        let dst = &mut gi.data_mut()[r * cols..(r + 1) * cols];
                        for (o, d) in dst.iter_mut().zip(g.row(r)) {
                            *o += d;
                        }
                    }
                }
                if let Some(gt) = acc(&self.nodes, grads, *token) {
                    for &r in rows.iter() {
                        for (o, d) in gt.data_mut().iter_mut().zip(g.row(r)) {
                            *o += d;
                        }
                    }
                }
            }
            Op::SliceRows(a, start) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    for r in 0..g.rows() {
                        for (o, d) in ga.row_mut(start + r).iter_mut().zip(g.row(r)) {
                            *o += d;
                        }
                    }
                }
            }
            Op::MulRows(a, weights) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    for (r, &w) in weights.iter().enumerate() {
                        for (o, d) in ga.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += w * d;
                        }
                    }
                }
            }
            Op::RowSum(a) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    for r in 0..ga.rows() {
                        for (o, d) in ga.row_mut(r).iter_mut().zip(g.data()) {
                            *o += d;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let d = g.item()?;
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.data_mut().iter_mut().for_each(|o| *o += d);
                }
            }
            Op::Mean(a) => {
                let d = g.item()? / val(*a).len() as f64;
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.data_mut().iter_mut().for_each(|o| *o += d);
                }
            }
            Op::FrobeniusDot(a, b) => {
                let d = g.item()?;
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    ga.axpy(d, vb)?;
                }
                if let Some(gb) = acc(&self.nodes, grads, *b) {
                    gb.axpy(d, va)?;
                }
            }
            Op::FrobeniusNorm(a) => {
                let norm = node.value.item()?;
                let va = val(*a);
                if norm > 0.0 {
                    if let Some(ga) = acc(&self.nodes, grads, *a) {
                        ga.axpy(g.item()? / norm, va)?;
                    }
                }
            }
            Op::SegmentDot(a, b, segs) => {
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    segment_axpy(segs, g, vb, ga, |d, _| d);
                }
                if let Some(gb) = acc(&self.nodes, grads, *b) {
                    segment_axpy(segs, g, va, gb, |d, _| d);
                }
            }
            Op::SegmentNorm(a, segs) => {
                let va = val(*a);
                let norms = &node.value;
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    segment_axpy(segs, g, va, ga, |d, k| {
                        let n = norms.get(k, 0);
                        if n > 0.0 {
                            d / n
                        } else {
                            0.0
                        }
                    });
                }
            }
            Op::SegmentSum(a, segs) => {
                if let Some(ga) = acc(&self.nodes, grads, *a) {
                    for k in 0..segs.len() {
                        for r in segs.range(k) {
                            for (o, d) in ga.row_mut(r).iter_mut().zip(g.row(k)) {
                                *o += d;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Tensor2>], v: Var) -> Option<&'a mut Tensor2> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let (r, c) = nodes[v.0].value.shape();
    Some(grads[v.0].get_or_insert_with(|| Tensor2::zeros(r, c)))
}

/// For each segment `k`: `out[rows_k] += coef(g[k], k) * src[rows_k]`.
fn segment_axpy(segs: &Segments, g: &Tensor2, src: &Tensor2, out: &mut Tensor2, coef: impl Fn(f64, usize) -> f64) {
    for k in 0..segs.len() {
        let c = coef(g.get(k, 0), k);
        if c == 0.0 {
            continue;
        }
        for r in segs.range(k) {
            for (o, s) in out.row_mut(r).iter_mut().zip(src.row(r)) {
                *o += c * s;
            }
        }
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// `dLoss/dv`; all zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor2 {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor2::zeros(r, c)
            }
        }
    }

    /// Moves the gradient out, leaving zeros behind on the next access.
    pub fn take(&mut self, v: Var) -> Tensor2 {
        self.grads[v.0].take().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Tensor2::zeros(r, c)
        })
    }
}
