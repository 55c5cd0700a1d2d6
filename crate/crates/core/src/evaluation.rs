//! Downstream probe and metrics: a linear SVM on frozen graph embeddings,
//! stratified splits, and multi-run averaging.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::encoder::{embed_all, Embedding};
use crate::error::{GamcError, Result};
use crate::graph::{Dataset, Label, PropagationGraph};
use crate::model::ModelParams;
use crate::rng::{derive_seed, SplitMix64};
use crate::training::{train, TrainConfig};

const EMBED_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub iterations: usize,
    pub lr: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            iterations: 2000,
            lr: 1e-2,
        }
    }
}

/// Linear SVM over standardized inputs; `fake` is the positive class.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl LinearSvm {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Signed margin; positive means fake.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut s = self.bias;
        for (((&xi, &m), &sc), &w) in x.iter().zip(&self.mean).zip(&self.scale).zip(&self.weights) {
            s += w * (xi - m) / sc;
        }
        s
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        if self.decision(x) >= 0.0 {
            Label::Fake
        } else {
            Label::Real
        }
    }
}

/// Fits a linear SVM with squared hinge loss and an L2 penalty by full-batch
/// gradient descent on
///
/// `J(w, b) = ||w||^2 / (2 C N) + (1/N) * sum_i max(0, 1 - y_i (w.z_i + b))^2`
///
/// where `z` are the inputs standardized with statistics of this training
/// set. The step is `min(lr, 1/L)` with `L` the gradient's Lipschitz bound,
/// which keeps descent stable on strongly correlated inputs.
pub fn train_svm(embeddings: &[Embedding], labels: &[Label], cfg: &SvmConfig) -> Result<LinearSvm> {
    if embeddings.len() != labels.len() {
        return Err(GamcError::Contract(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    if !labels.contains(&Label::Fake) || !labels.contains(&Label::Real) {
        return Err(GamcError::Contract("SVM training needs both classes".into()));
    }
    if !(cfg.c > 0.0) {
        return Err(GamcError::Config(format!("SVM C must be positive, got {}", cfg.c)));
    }
    let n = embeddings.len();
    let d = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != d || e.0.iter().any(|v| !v.is_finite())) {
        return Err(GamcError::Contract("embeddings must be finite and of equal length".into()));
    }

    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(&e.0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for e in embeddings {
        for ((s, v), m) in scale.iter_mut().zip(&e.0).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in scale.iter_mut() {
        let sd = (*s / n as f64).sqrt();
        *s = if sd > 1e-12 { sd } else { 1.0 };
    }
    let z: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.0.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();

    let reg = 1.0 / (cfg.c * n as f64);
    let lipschitz = 2.0 * gram_max_eigenvalue(&z) / n as f64 + reg;
    let step = cfg.lr.min(1.0 / lipschitz);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for _ in 0..cfg.iterations {
        gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = reg * wi);
        let mut gb = 0.0;
        for (zi, &yi) in z.iter().zip(&y) {
            let margin = yi * (dot(&w, zi) + b);
            if margin < 1.0 {
                let coef = -2.0 * (1.0 - margin) * yi / n as f64;
                gw.iter_mut().zip(zi).for_each(|(g, x)| *g += coef * x);
                gb += coef;
            }
        }
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
        b -= step * gb;
    }
    Ok(LinearSvm {
        weights: w,
        bias: b,
        c: cfg.c,
        mean,
        scale,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenvalue of `[Z 1]^T [Z 1]` by power iteration.
fn gram_max_eigenvalue(z: &[Vec<f64>]) -> f64 {
    let d = z.first().map_or(0, Vec::len) + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut next = vec![0.0; d];
        for row in z {
            let s: f64 = dot(&v[..d - 1], row) + v[d - 1];
            next[..d - 1].iter_mut().zip(row).for_each(|(o, x)| *o += s * x);
            next[d - 1] += s;
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = next.into_iter().map(|x| x / norm).collect();
    }
    // power iteration approaches from below
    lambda * 1.05
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Metrics {
    /// Metrics with `fake` as the positive class.
    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Result<Metrics> {
        if truth.len() != predicted.len() || truth.is_empty() {
            return Err(GamcError::Contract(format!(
                "cannot score {} predictions against {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let mut m = Metrics::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Fake, Label::Fake) => m.tp += 1,
                (Label::Real, Label::Fake) => m.fp += 1,
                (Label::Real, Label::Real) => m.tn += 1,
                (Label::Fake, Label::Real) => m.fn_ += 1,
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        m.accuracy = ratio(m.tp + m.tn, truth.len());
        m.precision = ratio(m.tp, m.tp + m.fp);
        m.recall = ratio(m.tp, m.tp + m.fn_);
        m.f1 = if m.precision + m.recall == 0.0 {
            0.0
        } else {
            2.0 * m.precision * m.recall / (m.precision + m.recall)
        };
        Ok(m)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

/// Indices `(train, test)` with each class split in proportion `train_frac`.
pub fn split_stratified(dataset: &Dataset, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(GamcError::Config(format!("train fraction must be in (0, 1), got {train_frac}")));
    }
    let mut fake = Vec::new();
    let mut real = Vec::new();
    for (i, g) in dataset.graphs().iter().enumerate() {
        match g.label {
            Some(Label::Fake) => fake.push(i),
            Some(Label::Real) => real.push(i),
            None => {
                return Err(GamcError::Invariant {
                    graph_id: g.id.clone(),
                    rule: "labeled graphs for evaluation".into(),
                })
            }
        }
    }
    let rng = SplitMix64::new(seed);
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (stream, mut class) in [(1, fake), (2, real)] {
        class.shuffle(&mut rng.fork(stream));
        let k = ((train_frac * class.len() as f64).round() as usize).min(class.len());
        train_ids.extend_from_slice(&class[..k]);
        test_ids.extend_from_slice(&class[k..]);
    }
    train_ids.sort_unstable();
    test_ids.sort_unstable();
    Ok((train_ids, test_ids))
}

fn labels_of(graphs: &[PropagationGraph]) -> Result<Vec<Label>> {
    graphs
        .iter()
        .map(|g| {
            g.label.ok_or_else(|| GamcError::Invariant {
                graph_id: g.id.clone(),
                rule: "labeled graphs for evaluation".into(),
            })
        })
        .collect()
}

/// Embeds every graph with the trained encoder and scores the SVM on them.
pub fn evaluate(model: &ModelParams, svm: &LinearSvm, test_graphs: &[PropagationGraph]) -> Result<Metrics> {
    let truth = labels_of(test_graphs)?;
    let embeddings = embed_all(&model.encoder, test_graphs, EMBED_CHUNK)?;
    if embeddings.first().map_or(0, Embedding::len) != svm.dim() {
        return Err(GamcError::Config(format!(
            "embedding dim {} does not match SVM dim {}",
            model.hidden_dim(),
            svm.dim()
        )));
    }
    let predicted: Vec<Label> = embeddings.iter().map(|e| svm.predict(e.as_slice())).collect();
    Metrics::from_predictions(&truth, &predicted)
}

/// Where the evaluated encoder comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EncoderSource {
    #[default]
    Trained,
    /// Initialized weights, no training: the random-encoder baseline.
    Untrained,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub train_frac: f64,
    pub svm: SvmConfig,
    pub encoder: EncoderSource,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train: TrainConfig::default(),
            train_frac: 0.75,
            svm: SvmConfig::default(),
            encoder: EncoderSource::Trained,
        }
    }
}

/// One split / train / probe cycle with everything seeded by `seed`.
///
/// The encoder is trained only on the training split, with labels stripped.
pub fn run_once(cfg: &EvalConfig, dataset: &Dataset, seed: u64) -> Result<Metrics> {
    let (train_ids, test_ids) = split_stratified(dataset, cfg.train_frac, seed)?;
    if test_ids.is_empty() {
        return Err(GamcError::Config("test split is empty".into()));
    }
    let train_set = dataset.subset(&train_ids)?;
    let test_set = dataset.subset(&test_ids)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let model = match cfg.encoder {
        EncoderSource::Trained => train(&train_cfg, &train_set)?.0,
        EncoderSource::Untrained => train_cfg.init_params(dataset.feature_dim())?,
    };
    let train_emb = embed_all(&model.encoder, train_set.graphs(), EMBED_CHUNK)?;
    let svm = train_svm(&train_emb, &labels_of(train_set.graphs())?, &cfg.svm)?;
    evaluate(&model, &svm, test_set.graphs())
}

/// Seed of run `r` under base seed `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    derive_seed(seed, run as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MetricsSummary {
    pub mean: [f64; 4],
    /// Sample standard deviation; zero for a single run.
    pub std: [f64; 4],
}

impl MetricsSummary {
    pub fn of(runs: &[Metrics]) -> MetricsSummary {
        let n = runs.len();
        let mut s = MetricsSummary::default();
        if n == 0 {
            return s;
        }
        for m in runs {
            for (acc, v) in s.mean.iter_mut().zip(m.values()) {
                *acc += v;
            }
        }
        s.mean.iter_mut().for_each(|v| *v /= n as f64);
        if n > 1 {
            for m in runs {
                for ((acc, v), mu) in s.std.iter_mut().zip(m.values()).zip(s.mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            s.std.iter_mut().for_each(|v| *v = (*v / (n - 1) as f64).sqrt());
        }
        s
    }

    pub fn accuracy(&self) -> f64 {
        self.mean[0]
    }

    pub fn accuracy_std(&self) -> f64 {
        self.std[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiRunReport {
    pub runs: Vec<Metrics>,
    pub summary: MetricsSummary,
}

impl MultiRunReport {
    pub fn from_runs(runs: Vec<Metrics>) -> Self {
        MultiRunReport {
            summary: MetricsSummary::of(&runs),
            runs,
        }
    }

    /// `run,acc,prec,rec,f1`, one line per run.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "run,acc,prec,rec,f1")?;
        for (i, m) in self.runs.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", i + 1, m.accuracy, m.precision, m.recall, m.f1)?;
        }
        Ok(())
    }
}

impl fmt::Display for MultiRunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>10}{:>10}{:>10}{:>10}", "run", "Acc.", "Prec.", "Rec.", "F1")?;
        for (i, m) in self.runs.iter().enumerate() {
            writeln!(
                f,
                "{:<10}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
                i + 1,
                m.accuracy,
                m.precision,
                m.recall,
                m.f1
            )?;
        }
        let s = &self.summary;
        write!(f, "{:<10}", "mean±std")?;
        for k in 0..4 {
            write!(f, "{:>10}", format!("{:.3}±{:.3}", s.mean[k], s.std[k]))?;
        }
        Ok(())
    }
}

/// `runs` independent runs with seeds derived from `base_seed`. Runs may
/// execute concurrently; results keep run order.
pub fn multi_run(cfg: &EvalConfig, dataset: &Dataset, runs: usize, base_seed: u64) -> Result<MultiRunReport> {
    if runs == 0 {
        return Err(GamcError::Config("runs must be >= 1".into()));
    }
    let metrics = (0..runs)
        .into_par_iter()
        .map(|r| run_once(cfg, dataset, run_seed(base_seed, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiRunReport::from_runs(metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor2;

    fn labeled(n_fake: usize, n_real: usize) -> Dataset {
        let graphs = (0..n_fake + n_real)
            .map(|i| {
                let label = if i < n_fake { Label::Fake } else { Label::Real };
                PropagationGraph::new(format!("g{i}"), vec![], Tensor2::filled(1, 1, i as f64), Some(label)).unwrap()
            })
            .collect();
        Dataset::new("t", graphs).unwrap()
    }

    #[test]
    fn balanced_split_of_four() {
        let ds = labeled(2, 2);
        let (train, test) = split_stratified(&ds, 0.5, 3).unwrap();
        let count = |ids: &[usize], l| ids.iter().filter(|&&i| ds.graphs()[i].label == Some(l)).count();
        assert_eq!((count(&train, Label::Fake), count(&train, Label::Real)), (1, 1));
        assert_eq!((count(&test, Label::Fake), count(&test, Label::Real)), (1, 1));
    }

    #[test]
    fn split_of_157_each() {
        let ds = labeled(157, 157);
        let (train, test) = split_stratified(&ds, 0.75, 1).unwrap();
        assert_eq!(train.len(), 236);
        assert_eq!(test.len(), 78);
    }

    #[test]
    fn split_rejects_unlabeled() {
        let g = PropagationGraph::new("u", vec![], Tensor2::zeros(1, 1), None).unwrap();
        let ds = Dataset::new("t", vec![g]).unwrap();
        assert!(split_stratified(&ds, 0.5, 0).is_err());
    }

    #[test]
    fn separable_pair() {
        let emb = vec![Embedding(vec![1.0, 0.0]), Embedding(vec![-1.0, 0.0])];
        let labels = [Label::Fake, Label::Real];
        let svm = train_svm(&emb, &labels, &SvmConfig::default()).unwrap();
        assert_eq!(svm.predict(&[1.0, 0.0]), Label::Fake);
        assert_eq!(svm.predict(&[-1.0, 0.0]), Label::Real);
        let hinge: f64 = emb
            .iter()
            .zip(&labels)
            .map(|(e, l)| (1.0 - l.sign() * svm.decision(&e.0)).max(0.0).powi(2))
            .sum();
        // minimizer of w^2/4 + (1 - w)^2 on standardized inputs +-1
        assert!((svm.weights[0] - 0.8).abs() < 1e-6, "{:?}", svm.weights);
        assert!((hinge - 0.08).abs() < 1e-6, "{hinge}");
    }

    #[test]
    fn contradictory_labels_on_one_point() {
        let emb = vec![Embedding(vec![0.5]); 2];
        let labels = [Label::Fake, Label::Real];
        let svm = train_svm(&emb, &labels, &SvmConfig::default()).unwrap();
        let pred: Vec<Label> = emb.iter().map(|e| svm.predict(&e.0)).collect();
        let m = Metrics::from_predictions(&labels, &pred).unwrap();
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let emb = vec![Embedding(vec![1.0]), Embedding(vec![2.0])];
        assert!(train_svm(&emb, &[Label::Fake, Label::Fake], &SvmConfig::default()).is_err());
    }

    #[test]
    fn degenerate_predictors() {
        let truth = [Label::Fake, Label::Real, Label::Fake, Label::Real];
        let m = Metrics::from_predictions(&truth, &truth).unwrap();
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
        let m = Metrics::from_predictions(&truth, &[Label::Fake; 4]).unwrap();
        assert_eq!((m.accuracy, m.recall, m.precision), (0.5, 1.0, 0.5));
        let m = Metrics::from_predictions(&truth, &[Label::Real; 4]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn summary_of_single_and_identical_runs() {
        let m = Metrics {
            accuracy: 0.8,
            precision: 0.7,
            recall: 0.9,
            f1: 0.78,
            ..Default::default()
        };
        assert_eq!(MetricsSummary::of(&[m]).std, [0.0; 4]);
        let s = MetricsSummary::of(&[m, m]);
        assert_eq!(s.std, [0.0; 4]);
        assert_eq!(s.mean, m.values());
    }
}
