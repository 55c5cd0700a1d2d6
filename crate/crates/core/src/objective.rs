//! Composite objective: feature reconstruction error minus a weighted cosine
//! similarity between the two views' reconstructions.
//!
//! Per graph with `n` nodes:
//!
//! ```text
//! l_rec   = (1/n) * (||X - X1'||^2 + ||X - X2'||^2)      squared row norms over rows in scope
//! l_con   = <X1', X2'>_F / (||X1'||_F * ||X2'||_F)         norms floored at 1e-12
//! l_total = l_rec - alpha * l_con
//! ```
//!
//! Batch values are the mean over graphs.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{GamcError, Result};
use crate::numerics::{Segments, Tape, Tensor2, Var};

pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RecScope {
    #[default]
    AllNodes,
    MaskedOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// No masking and no edge dropping; both views equal the input graph.
    NoAug,
    /// Contrast term only.
    NoRec,
    /// Reconstruction term only, from a single view.
    NoCon,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoAug, Ablation::NoRec, Ablation::NoCon];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoAug => "no-aug",
            Ablation::NoRec => "no-rec",
            Ablation::NoCon => "no-con",
        }
    }

    pub fn views(self) -> usize {
        match self {
            Ablation::NoCon => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = GamcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "full" => Ok(Ablation::Full),
            "no-aug" => Ok(Ablation::NoAug),
            "no-rec" => Ok(Ablation::NoRec),
            "no-con" => Ok(Ablation::NoCon),
            other => Err(GamcError::Config(format!(
                "unknown ablation `{other}` (expected full, no-aug, no-rec or no-con)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ContrastMode {
    /// Cosine of the flattened matrices.
    #[default]
    Frobenius,
    /// Mean over nodes of the row-wise cosine.
    RowMean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub rec_scope: RecScope,
    pub ablation: Ablation,
    pub contrast: ContrastMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.1,
            rec_scope: RecScope::AllNodes,
            ablation: Ablation::Full,
            contrast: ContrastMode::Frobenius,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(GamcError::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Combines the two terms according to the ablation mode.
    pub fn combine(&self, l_rec: f64, l_con: f64) -> f64 {
        match self.ablation {
            Ablation::Full | Ablation::NoAug => l_rec - self.alpha * l_con,
            Ablation::NoRec => -self.alpha * l_con,
            Ablation::NoCon => l_rec,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_rec: f64,
    pub l_con: f64,
    pub l_total: f64,
}

/// One view's reconstruction against the original features.
#[derive(Clone, Copy, Debug)]
pub struct ViewReconstruction<'a> {
    pub original: &'a Tensor2,
    pub reconstructed: &'a Tensor2,
    pub masked: &'a [usize],
}

/// Reconstruction error of one graph summed over its views, divided by the
/// node count.
pub fn reconstruction_loss(views: &[ViewReconstruction<'_>], scope: RecScope) -> Result<f64> {
    let n = views
        .first()
        .map(|v| v.original.rows())
        .ok_or_else(|| GamcError::Contract("reconstruction_loss needs at least one view".into()))?;
    if n == 0 {
        return Err(GamcError::Contract("reconstruction_loss on an empty graph".into()));
    }
    let mut total = 0.0;
    for v in views {
        if v.original.shape() != v.reconstructed.shape() || v.original.rows() != n {
            return Err(GamcError::shape(
                "reconstruction_loss",
                v.original.shape(),
                v.reconstructed.shape(),
            ));
        }
        let row_err = |r: usize| -> f64 {
            v.original
                .row(r)
                .iter()
                .zip(v.reconstructed.row(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        total += match scope {
            RecScope::AllNodes => (0..n).map(row_err).sum::<f64>(),
            RecScope::MaskedOnly => v.masked.iter().map(|&r| row_err(r)).sum::<f64>(),
        };
    }
    Ok(total / n as f64)
}

/// Cosine similarity of two equally shaped matrices treated as flat vectors.
pub fn contrast_loss(a: &Tensor2, b: &Tensor2) -> Result<f64> {
    let dot = a.frobenius_dot(b)?;
    Ok(dot / (a.frobenius_norm().max(NORM_FLOOR) * b.frobenius_norm().max(NORM_FLOOR)))
}

/// Mean over rows of the row-wise cosine similarity.
pub fn row_mean_cosine(a: &Tensor2, b: &Tensor2) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(GamcError::shape("row_mean_cosine", a.shape(), b.shape()));
    }
    if a.rows() == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .row_iter()
        .zip(b.row_iter())
        .map(|(x, y)| {
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
            dot / (nx * ny)
        })
        .sum();
    Ok(sum / a.rows() as f64)
}

/// Loss of a single graph. Two views are required unless the ablation is
/// [`Ablation::NoCon`], which uses exactly one (and reports `l_con = 0`).
pub fn total_loss(cfg: &LossConfig, views: &[ViewReconstruction<'_>]) -> Result<LossBreakdown> {
    cfg.validate()?;
    let expected = cfg.ablation.views();
    if views.len() != expected {
        return Err(GamcError::Contract(format!(
            "ablation {} needs {expected} view(s), got {}",
            cfg.ablation,
            views.len()
        )));
    }
    let l_rec = reconstruction_loss(views, cfg.rec_scope)?;
    let l_con = if views.len() == 2 {
        match cfg.contrast {
            ContrastMode::Frobenius => contrast_loss(views[0].reconstructed, views[1].reconstructed)?,
            ContrastMode::RowMean => row_mean_cosine(views[0].reconstructed, views[1].reconstructed)?,
        }
    } else {
        0.0
    };
    Ok(LossBreakdown {
        l_rec,
        l_con,
        l_total: cfg.combine(l_rec, l_con),
    })
}

/// One view of every graph in a batch, as tape variables over the same row
/// layout.
#[derive(Clone, Copy, Debug)]
pub struct ViewVars<'a> {
    pub target: Var,
    pub reconstructed: Var,
    /// Masked rows in batch coordinates.
    pub masked: &'a [usize],
}

/// Per-graph loss terms of a batch.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    /// Mean of `per_graph_total`; the value to differentiate.
    pub loss: Var,
    pub per_graph_rec: Tensor2,
    pub per_graph_con: Tensor2,
    pub per_graph_total: Tensor2,
}

impl BatchLoss {
    pub fn mean_breakdown(&self) -> LossBreakdown {
        let k = self.per_graph_total.rows().max(1) as f64;
        LossBreakdown {
            l_rec: self.per_graph_rec.sum() / k,
            l_con: self.per_graph_con.sum() / k,
            l_total: self.per_graph_total.sum() / k,
        }
    }
}

/// Recorded batch objective. `segments` partitions the rows of every view
/// into graphs.
pub fn batch_loss(tape: &mut Tape, cfg: &LossConfig, views: &[ViewVars<'_>], segments: &Arc<Segments>) -> Result<BatchLoss> {
    cfg.validate()?;
    if views.len() != cfg.ablation.views() {
        return Err(GamcError::Contract(format!(
            "ablation {} needs {} view(s), got {}",
            cfg.ablation,
            cfg.ablation.views(),
            views.len()
        )));
    }
    let inv_n: Vec<f64> = segments.lengths().map(|n| 1.0 / n as f64).collect();
    let inv_n_col = Tensor2::from_vec(inv_n.len(), 1, inv_n.clone())?;
    let inv_n_var = tape.constant(inv_n_col);

    let mut rec_sum: Option<Var> = None;
    for v in views {
        let mut diff = tape.sub(v.reconstructed, v.target)?;
        if cfg.rec_scope == RecScope::MaskedOnly {
            let mut w = vec![0.0; segments.total_rows()];
            for &r in v.masked {
                w[r] = 1.0;
            }
            diff = tape.mul_rows(diff, &w)?;
        }
        let sq = tape.segment_dot(diff, diff, segments)?;
        rec_sum = Some(match rec_sum {
            None => sq,
            Some(acc) => tape.add(acc, sq)?,
        });
    }
    let rec = tape.mul(rec_sum.expect("at least one view"), inv_n_var)?;

    let con = if views.len() == 2 {
        let (a, b) = (views[0].reconstructed, views[1].reconstructed);
        Some(match cfg.contrast {
            ContrastMode::Frobenius => cosine_per_segment(tape, a, b, segments)?,
            ContrastMode::RowMean => {
                let rows = Arc::new(Segments::from_lengths(std::iter::repeat(1).take(segments.total_rows())));
                let row_cos = cosine_per_segment(tape, a, b, &rows)?;
                let summed = tape.segment_sum(row_cos, segments)?;
                tape.mul(summed, inv_n_var)?
            }
        })
    } else {
        None
    };

    let total = match (cfg.ablation, con) {
        (Ablation::Full | Ablation::NoAug, Some(c)) => {
            let weighted = tape.scale(c, cfg.alpha);
            tape.sub(rec, weighted)?
        }
        (Ablation::NoRec, Some(c)) => tape.scale(c, -cfg.alpha),
        (Ablation::NoCon, _) => rec,
        _ => unreachable!("view count checked above"),
    };
    let loss = tape.mean(total)?;
    Ok(BatchLoss {
        loss,
        per_graph_rec: tape.value(rec).clone(),
        per_graph_con: con.map_or_else(|| Tensor2::zeros(segments.len(), 1), |c| tape.value(c).clone()),
        per_graph_total: tape.value(total).clone(),
    })
}

fn cosine_per_segment(tape: &mut Tape, a: Var, b: Var, segments: &Arc<Segments>) -> Result<Var> {
    let dot = tape.segment_dot(a, b, segments)?;
    let na = tape.segment_norm(a, segments)?;
    let na = tape.clamp_min(na, NORM_FLOOR);
    let nb = tape.segment_norm(b, segments)?;
    let nb = tape.clamp_min(nb, NORM_FLOOR);
    let denom = tape.mul(na, nb)?;
    tape.div(dot, denom)
}
