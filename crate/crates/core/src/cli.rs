//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::encoder::embed_all;
use crate::error::{GamcError, Result};
use crate::evaluation::{multi_run, train_svm, EncoderSource, EvalConfig, SvmConfig};
use crate::graph::{load_dataset, save_dataset, Label};
use crate::model::{load_checkpoint, save_checkpoint};
use crate::objective::{Ablation, ContrastMode, RecScope};
use crate::sweep::{default_grid, sweep};
use crate::synth::{generate, SynthConfig};
use crate::training::{train, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "gamc", version, about = "Unsupervised fake news detection on propagation graphs")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        num_graphs: usize,
        #[arg(long, default_value_t = 32)]
        feature_dim: usize,
        /// Distance between class centers in noise deviations.
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        /// Fraction of fake graphs.
        #[arg(long, default_value_t = 0.5)]
        balance: f64,
        #[arg(long, default_value_t = 8)]
        max_depth: usize,
    },
    /// Train an encoder and write a checkpoint plus a loss trace.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV; defaults to the checkpoint path with `.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Write graph embeddings as CSV.
    Embed {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a linear SVM on labeled embeddings and predict every graph.
    Classify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Labeled dataset for fitting; defaults to `--data`.
        #[arg(long)]
        labels_from: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        svm_c: f64,
    },
    /// Repeated split / train / probe runs with a summary table.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Per-run metrics CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0.75)]
        train_frac: f64,
        #[arg(long, default_value_t = 1.0)]
        svm_c: f64,
        /// Probe the initialized encoder without training.
        #[arg(long)]
        untrained: bool,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Accuracy over the mask-rate x edge-drop-rate grid.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        mask_rates: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        edge_drop_rates: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.75)]
        train_frac: f64,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Print dataset statistics.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScopeArg {
    AllNodes,
    MaskedOnly,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ContrastArg {
    Frobenius,
    RowMean,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value_t = 80)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    mask_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    edge_drop_rate: f64,
    #[arg(long, default_value_t = 512)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 1)]
    decoder_layers: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// full, no-aug, no-rec or no-con.
    #[arg(long, default_value = "full")]
    ablation: Ablation,
    /// Draw views once instead of every epoch.
    #[arg(long)]
    static_views: bool,
    #[arg(long, value_enum, default_value = "all-nodes")]
    rec_scope: ScopeArg,
    #[arg(long, value_enum, default_value = "frobenius")]
    contrast: ContrastArg,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            alpha: self.alpha,
            mask_rate: self.mask_rate,
            edge_drop_rate: self.edge_drop_rate,
            hidden_dim: self.hidden_dim,
            decoder_layers: self.decoder_layers,
            batch_size: self.batch_size,
            seed,
            ablation: self.ablation,
            static_views: self.static_views,
            rec_scope: match self.rec_scope {
                ScopeArg::AllNodes => RecScope::AllNodes,
                ScopeArg::MaskedOnly => RecScope::MaskedOnly,
            },
            contrast: match self.contrast {
                ContrastArg::Frobenius => ContrastMode::Frobenius,
                ContrastArg::RowMean => ContrastMode::RowMean,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| GamcError::io(path, e))
}

fn finish(path: &Path, result: std::io::Result<()>) -> Result<()> {
    result.map_err(|e| GamcError::io(path, e))
}

fn trace_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".trace.csv");
    checkpoint.with_file_name(name)
}

fn execute(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth {
            out,
            num_graphs,
            feature_dim,
            separation,
            balance,
            max_depth,
        } => {
            let mut cfg = SynthConfig::with_separation(num_graphs, feature_dim, separation, seed);
            cfg.class_balance = balance;
            cfg.max_depth = max_depth;
            let ds = generate(&cfg)?;
            save_dataset(&ds, &out)?;
            log::info!("wrote {} graphs to {}", ds.len(), out.display());
        }
        Command::Train { data, out, trace, train: args } => {
            let cfg = args.config(seed)?;
            let ds = load_dataset(&data)?;
            let (params, report) = train(&cfg, &ds)?;
            save_checkpoint(&params, &out)?;
            report.save_trace_csv(trace.unwrap_or_else(|| trace_path(&out)))?;
            if let Some(last) = report.epochs.last() {
                println!(
                    "trained {} epochs in {:.1}s, final loss {:.6} (rec {:.6}, con {:.6})",
                    report.epochs.len(),
                    report.wall_time_secs,
                    last.l_total,
                    last.l_rec,
                    last.l_con
                );
            }
        }
        Command::Embed { data, model, out } => {
            let ds = load_dataset(&data)?;
            let params = load_checkpoint(&model)?;
            let emb = embed_all(&params.encoder, ds.graphs(), 64)?;
            let mut w = create(&out)?;
            let write = (|| {
                let dim = params.hidden_dim();
                let header: Vec<String> = (0..dim).map(|k| format!("f{k}")).collect();
                writeln!(w, "id,{}", header.join(","))?;
                for (g, e) in ds.graphs().iter().zip(&emb) {
                    let vals: Vec<String> = e.0.iter().map(|v| v.to_string()).collect();
                    writeln!(w, "{},{}", g.id, vals.join(","))?;
                }
                w.flush()
            })();
            finish(&out, write)?;
        }
        Command::Classify {
            data,
            model,
            out,
            labels_from,
            svm_c,
        } => {
            let ds = load_dataset(&data)?;
            let fit_ds = match &labels_from {
                Some(p) => load_dataset(p)?,
                None => ds.clone(),
            };
            let params = load_checkpoint(&model)?;
            let labeled: Vec<_> = fit_ds.graphs().iter().filter(|g| g.label.is_some()).cloned().collect();
            let labels: Vec<Label> = labeled.iter().filter_map(|g| g.label).collect();
            let fit_emb = embed_all(&params.encoder, &labeled, 64)?;
            let svm_cfg = SvmConfig {
                c: svm_c,
                ..SvmConfig::default()
            };
            let svm = train_svm(&fit_emb, &labels, &svm_cfg)?;
            let emb = embed_all(&params.encoder, ds.graphs(), 64)?;
            let mut w = create(&out)?;
            let write = (|| {
                writeln!(w, "id,score,prediction,label")?;
                for (g, e) in ds.graphs().iter().zip(&emb) {
                    let label = g.label.map_or(String::new(), |l| l.to_string());
                    writeln!(w, "{},{},{},{}", g.id, svm.decision(&e.0), svm.predict(&e.0), label)?;
                }
                w.flush()
            })();
            finish(&out, write)?;
        }
        Command::Eval {
            data,
            out,
            runs,
            train_frac,
            svm_c,
            untrained,
            train: args,
        } => {
            let ds = load_dataset(&data)?;
            let cfg = EvalConfig {
                train: args.config(seed)?,
                train_frac,
                svm: SvmConfig {
                    c: svm_c,
                    ..SvmConfig::default()
                },
                encoder: if untrained {
                    EncoderSource::Untrained
                } else {
                    EncoderSource::Trained
                },
            };
            let report = multi_run(&cfg, &ds, runs, seed)?;
            println!("{report}");
            if let Some(out) = out {
                let mut w = create(&out)?;
                let write = report.write_csv(&mut w).and_then(|_| w.flush());
                finish(&out, write)?;
            }
        }
        Command::Sweep {
            data,
            out,
            mask_rates,
            edge_drop_rates,
            train_frac,
            train: args,
        } => {
            let ds = load_dataset(&data)?;
            let cfg = EvalConfig {
                train: args.config(seed)?,
                train_frac,
                ..EvalConfig::default()
            };
            let report = sweep(
                &cfg,
                &ds,
                &mask_rates.unwrap_or_else(default_grid),
                &edge_drop_rates.unwrap_or_else(default_grid),
                seed,
            )?;
            let mut w = create(&out)?;
            let write = report.write_csv(&mut w).and_then(|_| w.flush());
            finish(&out, write)?;
            if let Some(best) = report.best() {
                println!(
                    "best λ={} γ={} acc={:.4}",
                    best.mask_rate, best.edge_drop_rate, best.metrics.accuracy
                );
            }
        }
        Command::Stats { data } => {
            let ds = load_dataset(&data)?;
            println!("{}", ds.name);
            println!("{}", ds.stats());
        }
    }
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("GAMC_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return 1;
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
