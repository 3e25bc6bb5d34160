//! Command-line front end: training, evaluation, benchmarking, memory
//! export and synthetic data generation.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use triformer_core::data::{load_csv, save_csv, split, synth, SeriesTable, StandardizeStats, WindowDataset};
use triformer_core::model::{load_checkpoint, save_checkpoint};
use triformer_core::scaling::{mechanism_slope, run_bench, BenchSettings, Mechanism};
use triformer_core::training::{evaluate, persistence_baseline, train_with_observer};
use triformer_core::vsm::write_memory_csv;
use triformer_core::{Result, TriformerError, TriformerModel};

use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// Process exit code for an error: 2 for configuration, shape and
/// checkpoint problems, 3 for data and file problems, 1 otherwise.
pub fn exit_code(err: &TriformerError) -> i32 {
    match err {
        TriformerError::Config(_) | TriformerError::Shape(_) | TriformerError::Checkpoint(_) => EXIT_CONFIG,
        TriformerError::Data(_) | TriformerError::Parse { .. } | TriformerError::Io { .. } => EXIT_DATA,
        TriformerError::NonFinite(_) => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "triformer", version, about = "Patch-attention forecasting with linear complexity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set model.vsm=off`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes checkpoint.bin, history.json and config.resolved to out.dir.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on the data split described by the config.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Segment to score.
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
        split: String,
        /// Metrics JSON path; defaults to `<out.dir>/metrics_<split>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time forward passes of patch attention against canonical attention.
    Bench {
        /// Comma-separated lookback lengths.
        #[arg(long = "h", value_delimiter = ',', default_value = "256,512,1024,2048")]
        h: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Number of variables.
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
    /// Write the learned per-variable memories of a checkpoint as CSV.
    ExportMemories {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic multivariate series as CSV.
    Synth {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 4000)]
        t: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        heterogeneity: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs a parsed command and returns the process exit code, reporting
/// errors on stderr.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&RunConfig::load(args.config.as_deref(), &args.overrides)?),
        Command::Eval {
            checkpoint,
            config,
            split,
            out,
        } => {
            let cfg = RunConfig::load(config.config.as_deref(), &config.overrides)?;
            cmd_eval(&checkpoint, &cfg, &split, out.as_deref())
        }
        Command::Bench {
            h,
            repetitions,
            n,
            d,
            seed,
            out,
        } => cmd_bench(
            &h,
            &BenchSettings {
                n,
                d,
                repetitions,
                seed,
            },
            &out,
        ),
        Command::ExportMemories { checkpoint, out } => cmd_export_memories(&checkpoint, &out),
        Command::Synth {
            n,
            t,
            seed,
            heterogeneity,
            out,
        } => cmd_synth(n, t, seed, heterogeneity, &out),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| TriformerError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Standardized train/val/test windows for the given lookback and horizon.
pub struct PreparedData {
    pub train: WindowDataset,
    pub val: WindowDataset,
    pub test: WindowDataset,
    pub stats: StandardizeStats,
}

impl PreparedData {
    pub fn segment(&self, name: &str) -> &WindowDataset {
        match name {
            "train" => &self.train,
            "val" => &self.val,
            _ => &self.test,
        }
    }
}

pub fn load_table(cfg: &RunConfig) -> Result<SeriesTable> {
    match &cfg.data_path {
        Some(path) => load_csv(path),
        None => {
            let s = &cfg.synth;
            if s.n == 0 || s.t == 0 {
                return Err(TriformerError::Config("data.synth.n and data.synth.t must be positive".into()));
            }
            Ok(synth(s.n, s.t, s.seed, s.heterogeneity))
        }
    }
}

/// Loads the data, splits it chronologically and standardizes every
/// segment with training-segment statistics.
pub fn prepare_data(cfg: &RunConfig, h: usize, f: usize) -> Result<PreparedData> {
    let table = load_table(cfg)?;
    let parts = split(&table, &cfg.split, h + f)?;
    let stats = StandardizeStats::fit(&parts.train)?;
    let make = |t: &SeriesTable| -> Result<WindowDataset> { WindowDataset::new(stats.apply(t)?, h, f) };
    Ok(PreparedData {
        train: make(&parts.train)?,
        val: make(&parts.val)?,
        test: make(&parts.test)?,
        stats,
    })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.train.validate()?;
    let mut model_cfg = cfg.model.clone();
    triformer_core::validate_config(&model_cfg)?;

    let data = prepare_data(cfg, model_cfg.h, model_cfg.f)?;
    model_cfg.n = data.train.n_vars();
    let mut model = TriformerModel::new(model_cfg)?;
    println!(
        "training: {} parameters, {} train / {} val windows",
        model.num_parameters(),
        data.train.len(),
        data.val.len()
    );
    let mut history = train_with_observer(&mut model, &data.train, &data.val, &cfg.train, |r| {
        println!(
            "epoch {:>3}  train_loss {:.6}  val_mse {:.6}  val_mae {:.6}  ({:.1}s)",
            r.epoch, r.train_loss, r.val_mse, r.val_mae, r.wall_seconds
        );
    })?;

    fs::create_dir_all(&cfg.out_dir).map_err(|e| TriformerError::Io {
        path: cfg.out_dir.clone(),
        source: e,
    })?;
    let checkpoint = cfg.out_dir.join("checkpoint.bin");
    save_checkpoint(&checkpoint, &model)?;
    history.checkpoint = Some(checkpoint.display().to_string());
    let json = serde_json::to_string_pretty(&history).expect("history serializes");
    write_file(&cfg.out_dir.join("history.json"), json + "\n")?;
    write_file(&cfg.out_dir.join("config.resolved"), cfg.to_text())?;
    println!(
        "best epoch {}: val mse {:.6}, mae {:.6}; wrote {}",
        history.best_epoch,
        history.metrics.mse,
        history.metrics.mae,
        cfg.out_dir.display()
    );
    Ok(())
}

pub fn cmd_eval(checkpoint: &Path, cfg: &RunConfig, segment: &str, out: Option<&Path>) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let mc = model.config();
    let data = prepare_data(cfg, mc.h, mc.f)?;
    let windows = data.segment(segment);
    if windows.n_vars() != mc.n {
        return Err(TriformerError::Shape(format!(
            "checkpoint expects {} variables, data has {}",
            mc.n,
            windows.n_vars()
        )));
    }
    let metrics = evaluate(&model, windows)?;
    let baseline = persistence_baseline(windows)?;
    let doc = json!({
        "split": segment,
        "mse": metrics.mse,
        "mae": metrics.mae,
        "persistence": { "mse": baseline.mse, "mae": baseline.mae },
    });
    let text = serde_json::to_string_pretty(&doc).expect("metrics serialize");
    println!("{text}");
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => {
            fs::create_dir_all(&cfg.out_dir).map_err(|e| TriformerError::Io {
                path: cfg.out_dir.clone(),
                source: e,
            })?;
            cfg.out_dir.join(format!("metrics_{segment}.json"))
        }
    };
    write_file(&path, text + "\n")
}

pub fn cmd_bench(hs: &[usize], settings: &BenchSettings, out: &Path) -> Result<()> {
    if hs.is_empty() {
        return Err(TriformerError::Config("no lookback lengths given".into()));
    }
    let rows = run_bench(hs, settings)?;
    let mut csv = String::from("h,mechanism,median_seconds,attention_score_count\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{:e},{}\n",
            r.h, r.mechanism, r.median_seconds, r.attention_score_count
        ));
        println!(
            "H={:<6} {:<10} {:>12.6} s  {:>12} scores",
            r.h, r.mechanism, r.median_seconds, r.attention_score_count
        );
    }
    write_file(out, csv)?;
    if hs.len() >= 2 {
        for m in [Mechanism::Patch, Mechanism::Canonical] {
            println!("log-log slope ({m}): {:.3}", mechanism_slope(&rows, m)?);
        }
    }
    Ok(())
}

pub fn cmd_export_memories(checkpoint: &Path, out: &Path) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let memory = model
        .memory()
        .ok_or_else(|| TriformerError::Config("no memories in checkpoint".into()))?;
    let values = model.params().value(memory.memory);
    write_memory_csv(out, values)?;
    println!(
        "wrote {} memories of width {} to {}",
        values.shape()[0],
        values.shape()[1],
        out.display()
    );
    Ok(())
}

pub fn cmd_synth(n: usize, t: usize, seed: u64, heterogeneity: f64, out: &Path) -> Result<()> {
    if n == 0 || t == 0 {
        return Err(TriformerError::Config("n and t must be positive".into()));
    }
    if !heterogeneity.is_finite() || heterogeneity < 0.0 {
        return Err(TriformerError::Config(format!(
            "heterogeneity {heterogeneity} must be a non-negative number"
        )));
    }
    save_csv(&synth(n, t, seed, heterogeneity), out)?;
    println!("wrote {t} rows x {n} variables to {}", out.display());
    Ok(())
}
