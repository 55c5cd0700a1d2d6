//! Unsupervised training loop.
//!
//! Each epoch shuffles the graphs, draws fresh views per graph (or reuses the
//! epoch-0 views with `static_views`), and for every mini-batch runs
//! encode -> re-mask -> decode -> loss -> backward -> Adam. Labels are stripped
//! before anything else happens.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::augment::{make_view, AugmentConfig, AugmentedView};
use crate::batch::GraphBatch;
use crate::decoder::{decode, remask};
use crate::encoder::encode;
use crate::error::{GamcError, Result};
use crate::graph::{Dataset, PropagationGraph};
use crate::model::{ModelDims, ModelParams};
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor2};
use crate::objective::{batch_loss, Ablation, ContrastMode, LossBreakdown, LossConfig, RecScope, ViewVars};
use crate::rng::SplitMix64;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_AUGMENT: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub alpha: f64,
    pub mask_rate: f64,
    pub edge_drop_rate: f64,
    pub hidden_dim: usize,
    pub decoder_layers: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub static_views: bool,
    pub rec_scope: RecScope,
    pub contrast: ContrastMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 80,
            lr: 1e-3,
            alpha: 0.1,
            mask_rate: 0.5,
            edge_drop_rate: 0.2,
            hidden_dim: 512,
            decoder_layers: 1,
            batch_size: 32,
            seed: 0,
            ablation: Ablation::Full,
            static_views: false,
            rec_scope: RecScope::AllNodes,
            contrast: ContrastMode::Frobenius,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(GamcError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(GamcError::Config("batch size must be >= 1".into()));
        }
        if self.hidden_dim == 0 || self.decoder_layers == 0 {
            return Err(GamcError::Config("hidden dim and decoder layers must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GamcError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        self.augment_config().validate()?;
        self.loss_config().validate()
    }

    /// Augmentation actually applied; all zero under [`Ablation::NoAug`].
    pub fn augment_config(&self) -> AugmentConfig {
        match self.ablation {
            Ablation::NoAug => AugmentConfig::none(),
            _ => AugmentConfig {
                mask_rate: self.mask_rate,
                edge_drop_rate: self.edge_drop_rate,
            },
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            rec_scope: self.rec_scope,
            ablation: self.ablation,
            contrast: self.contrast,
        }
    }

    pub fn dims(&self, feature_dim: usize) -> ModelDims {
        ModelDims {
            feature_dim,
            hidden_dim: self.hidden_dim,
            decoder_layers: self.decoder_layers,
        }
    }

    /// Freshly initialized parameters for this config and seed.
    pub fn init_params(&self, feature_dim: usize) -> Result<ModelParams> {
        let mut rng = SplitMix64::new(self.seed).fork(STREAM_INIT);
        ModelParams::init(self.dims(feature_dim), &mut rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean loss terms per epoch, in epoch order.
    pub epochs: Vec<LossBreakdown>,
    pub wall_time_secs: f64,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
}

impl TrainReport {
    /// Writes `epoch,l_rec,l_con,l_total` with 1-based epochs.
    pub fn write_trace_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,l_rec,l_con,l_total")?;
        for (i, e) in self.epochs.iter().enumerate() {
            writeln!(w, "{},{},{},{}", i + 1, e.l_rec, e.l_con, e.l_total)?;
        }
        Ok(())
    }

    pub fn save_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_trace_csv(&mut buf).map_err(|e| GamcError::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| GamcError::io(path, e))
    }
}

/// Views of one mini-batch: `first[k]` (and `second[k]`) belong to `originals[k]`.
pub struct ViewSet<'a> {
    pub originals: Vec<&'a PropagationGraph>,
    pub first: Vec<AugmentedView>,
    pub second: Option<Vec<AugmentedView>>,
}

impl<'a> ViewSet<'a> {
    /// Draws one or two views per graph; `stream(k)` supplies graph `k`'s PRNG.
    pub fn sample(
        originals: Vec<&'a PropagationGraph>,
        cfg: &TrainConfig,
        mask_token: &[f64],
        stream: impl Fn(usize) -> SplitMix64,
    ) -> Result<Self> {
        let aug = cfg.augment_config();
        let two = cfg.ablation.views() == 2;
        let mut first = Vec::with_capacity(originals.len());
        let mut second = two.then(|| Vec::with_capacity(originals.len()));
        for (k, g) in originals.iter().enumerate() {
            let rng = stream(k);
            first.push(make_view(g, &aug, mask_token, rng.fork(1))?);
            if let Some(s) = second.as_mut() {
                s.push(make_view(g, &aug, mask_token, rng.fork(2))?);
            }
        }
        Ok(ViewSet {
            originals,
            first,
            second,
        })
    }
}

/// Loss terms and gradients (keyed by parameter name) of one mini-batch.
pub struct StepResult {
    pub breakdown: LossBreakdown,
    pub per_graph_total: Tensor2,
    pub grads: BTreeMap<String, Tensor2>,
}

/// Forward pass only: the batch mean of the loss terms.
pub fn batch_objective(params: &ModelParams, loss_cfg: &LossConfig, views: &ViewSet<'_>) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let (loss, _) = record_batch(&mut tape, params, loss_cfg, views)?;
    Ok(loss.mean_breakdown())
}

/// Forward and backward pass over one mini-batch.
pub fn batch_gradients(params: &ModelParams, loss_cfg: &LossConfig, views: &ViewSet<'_>) -> Result<StepResult> {
    let mut tape = Tape::new();
    let (loss, vars) = record_batch(&mut tape, params, loss_cfg, views)?;
    let mut grads = tape.backward(loss.loss)?;
    Ok(StepResult {
        breakdown: loss.mean_breakdown(),
        per_graph_total: loss.per_graph_total.clone(),
        grads: vars.collect(params, &mut grads),
    })
}

fn record_batch(
    tape: &mut Tape,
    params: &ModelParams,
    loss_cfg: &LossConfig,
    views: &ViewSet<'_>,
) -> Result<(crate::objective::BatchLoss, crate::model::ModelVars)> {
    let k = views.originals.len();
    if k == 0 {
        return Err(GamcError::Contract("empty batch".into()));
    }
    // Both views of every graph go through the network as one union batch:
    // rows [0, N) hold the first views, rows [N, 2N) the second.
    let mut all_views: Vec<&AugmentedView> = views.first.iter().collect();
    let mut all_originals = views.originals.clone();
    if let Some(second) = &views.second {
        all_views.extend(second.iter());
        all_originals.extend(views.originals.iter().copied());
    }
    let batch = GraphBatch::from_views(&all_views, &all_originals)?;
    let vars = params.register(tape);

    let (h, _pooled) = encode(tape, &vars.encoder, &batch, vars.mask_token)?;
    let h_hat = remask(tape, h, &batch.masked_rows, vars.decoder.remask_token)?;
    let recon = decode(tape, &vars.decoder, &batch.adjacency, h_hat)?;

    let per_view_rows: usize = views.originals.iter().map(|g| g.num_nodes()).sum();
    let segments = std::sync::Arc::new(crate::numerics::Segments::from_lengths(
        views.originals.iter().map(|g| g.num_nodes()),
    ));
    let n_views = all_views.len() / k;
    let mut masked_split: Vec<Vec<usize>> = vec![Vec::new(); n_views];
    for &r in &batch.masked_rows {
        masked_split[r / per_view_rows].push(r % per_view_rows);
    }
    let mut view_vars = Vec::with_capacity(n_views);
    for (v, masked) in masked_split.iter().enumerate() {
        let (start, end) = (v * per_view_rows, (v + 1) * per_view_rows);
        let target = tape.constant(batch.targets.slice_rows(start, end)?);
        let reconstructed = if n_views == 1 {
            recon
        } else {
            tape.slice_rows(recon, start, end)?
        };
        view_vars.push(ViewVars {
            target,
            reconstructed,
            masked,
        });
    }
    let loss = batch_loss(tape, loss_cfg, &view_vars, &segments)?;
    Ok((loss, vars))
}

/// Trains a model from scratch on `dataset`. Labels are never read.
pub fn train(cfg: &TrainConfig, dataset: &Dataset) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let data = dataset.unlabeled();
    let graphs = data.graphs();
    let root = SplitMix64::new(cfg.seed);
    let mut params = cfg.init_params(data.feature_dim())?;
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let loss_cfg = cfg.loss_config();
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        wall_time_secs: 0.0,
        checkpoint: None,
        seed: cfg.seed,
    };

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut root.fork(STREAM_SHUFFLE).fork(epoch as u64));
        let view_epoch = if cfg.static_views { 0 } else { epoch as u64 };
        let aug_root = root.fork(STREAM_AUGMENT).fork(view_epoch);

        let mut sums = LossBreakdown::default();
        for chunk in order.chunks(cfg.batch_size) {
            let originals: Vec<&PropagationGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
            let views = ViewSet::sample(originals, cfg, params.mask_token.data(), |k| {
                aug_root.fork(chunk[k] as u64)
            })?;
            let step = batch_gradients(&params, &loss_cfg, &views)?;
            if let Some(bad) = step.per_graph_total.data().iter().position(|v| !v.is_finite()) {
                return Err(GamcError::NonFiniteLoss {
                    epoch: epoch + 1,
                    graph_id: graphs[chunk[bad]].id.clone(),
                });
            }
            adam.apply(params.named_tensors_mut(), &step.grads)?;
            let k = chunk.len() as f64;
            sums.l_rec += step.breakdown.l_rec * k;
            sums.l_con += step.breakdown.l_con * k;
            sums.l_total += step.breakdown.l_total * k;
        }
        if !params.is_finite() {
            return Err(GamcError::NonFiniteLoss {
                epoch: epoch + 1,
                graph_id: "<parameters>".into(),
            });
        }
        let n = graphs.len() as f64;
        let mean = LossBreakdown {
            l_rec: sums.l_rec / n,
            l_con: sums.l_con / n,
            l_total: sums.l_total / n,
        };
        log::debug!(
            "epoch {}/{}: l_rec={:.6} l_con={:.6} l_total={:.6}",
            epoch + 1,
            cfg.epochs,
            mean.l_rec,
            mean.l_con,
            mean.l_total
        );
        report.epochs.push(mean);
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    log::info!(
        "trained {} epochs on {} graphs in {:.1}s",
        cfg.epochs,
        graphs.len(),
        report.wall_time_secs
    );
    Ok((params, report))
}
