//! Grid sweep over mask rate and edge-drop rate.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{GamcError, Result};
use crate::evaluation::{run_once, EvalConfig, Metrics};
use crate::graph::Dataset;

/// `0.1, 0.2, ..., 0.9`.
pub fn default_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub mask_rate: f64,
    pub edge_drop_rate: f64,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    /// Header `λ,γ,acc,prec,rec,f1`; rows in mask-rate-major order.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "λ,γ,acc,prec,rec,f1")?;
        for c in &self.cells {
            let m = &c.metrics;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.mask_rate, c.edge_drop_rate, m.accuracy, m.precision, m.recall, m.f1
            )?;
        }
        Ok(())
    }

    pub fn cell(&self, mask_rate: f64, edge_drop_rate: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| (c.mask_rate - mask_rate).abs() < 1e-9 && (c.edge_drop_rate - edge_drop_rate).abs() < 1e-9)
    }

    /// Number of cells with strictly higher accuracy than the given one.
    pub fn cells_above(&self, mask_rate: f64, edge_drop_rate: f64) -> Option<usize> {
        let target = self.cell(mask_rate, edge_drop_rate)?.metrics.accuracy;
        Some(self.cells.iter().filter(|c| c.metrics.accuracy > target).count())
    }

    pub fn best(&self) -> Option<&SweepCell> {
        self.cells
            .iter()
            .max_by(|a, b| a.metrics.accuracy.total_cmp(&b.metrics.accuracy))
    }
}

/// Evaluates every `(mask_rate, edge_drop_rate)` pair. All cells share
/// `seed`, so they see the same split, initialization and view streams and
/// differ only in the rates.
pub fn sweep(
    cfg: &EvalConfig,
    dataset: &Dataset,
    mask_rates: &[f64],
    edge_drop_rates: &[f64],
    seed: u64,
) -> Result<SweepReport> {
    if mask_rates.is_empty() || edge_drop_rates.is_empty() {
        return Err(GamcError::Config("sweep grid is empty".into()));
    }
    let pairs: Vec<(f64, f64)> = mask_rates
        .iter()
        .flat_map(|&l| edge_drop_rates.iter().map(move |&g| (l, g)))
        .collect();
    let cells = pairs
        .into_par_iter()
        .map(|(l, g)| {
            let mut c = cfg.clone();
            c.train.mask_rate = l;
            c.train.edge_drop_rate = g;
            c.train.validate()?;
            Ok(SweepCell {
                mask_rate: l,
                edge_drop_rate: g,
                metrics: run_once(&c, dataset, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { cells })
}
