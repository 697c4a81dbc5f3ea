//! Argument declarations. Every option is optional at the clap level; the
//! resolver in `config.rs` applies CLI > config file > default precedence.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "lineloss",
    about = "Feeder line-loss forecasting: synthetic data, SCADA cleaning, training, evaluation",
    version
)]
pub struct Cli {
    /// Plain-text config file with `key = value` lines; CLI flags override.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic feeder dataset (CSV bundle).
    Synth(SynthArgs),
    /// Detect outliers and impute missing cells in a SCADA CSV.
    Clean(CleanArgs),
    /// Train one forecaster per horizon; writes checkpoints + loss curves.
    Train(TrainArgs),
    /// Forecast over every window of a dataset with a trained checkpoint.
    Predict(PredictArgs),
    /// Test-split metrics (rmse/mae/r2) for trained checkpoints.
    Evaluate(EvaluateArgs),
    /// Nested component-removal study on one horizon.
    Ablate(AblateArgs),
    /// Verify tape gradients against finite differences, per block.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
    /// path | tree | random-tree
    #[arg(long)]
    pub topology: Option<String>,
    #[arg(long = "missing-fraction")]
    pub missing_fraction: Option<f64>,
    #[arg(long = "outlier-fraction")]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub scada: Option<PathBuf>,
    #[arg(long)]
    pub loss: Option<PathBuf>,
    #[arg(long = "lof-k")]
    pub lof_k: Option<usize>,
    #[arg(long = "min-pts")]
    pub min_pts: Option<usize>,
    /// DBSCAN radius; omitted = 90th percentile of 5-NN distances.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long = "tree-depth")]
    pub tree_depth: Option<usize>,
    #[arg(long = "min-leaf")]
    pub min_leaf: Option<usize>,
    #[arg(long = "max-rounds")]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Architecture options shared by train/ablate.
#[derive(Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long = "gcn-hidden")]
    pub gcn_hidden: Option<usize>,
    #[arg(long = "gcn-out")]
    pub gcn_out: Option<usize>,
    #[arg(long = "embed-dim")]
    pub embed_dim: Option<usize>,
    #[arg(long = "attention-hidden")]
    pub attention_hidden: Option<usize>,
    #[arg(long = "lstm-layers")]
    pub lstm_layers: Option<usize>,
    #[arg(long = "lstm-hidden")]
    pub lstm_hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Comma list of blocks to ablate: gcn,d_atten,f_atten,lstm,t_atten
    #[arg(long)]
    pub disable: Option<String>,
    /// weighted-sum | mean | last
    #[arg(long = "time-agg")]
    pub time_agg: Option<String>,
    /// Model init seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Optimizer options shared by train/ablate.
#[derive(Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long = "min-delta")]
    pub min_delta: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long = "weight-decay")]
    pub weight_decay: Option<f64>,
    /// Shuffle/dropout seed.
    #[arg(long = "train-seed")]
    pub train_seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scada: Option<PathBuf>,
    #[arg(long)]
    pub loss: Option<PathBuf>,
    #[arg(long = "static")]
    pub static_attrs: Option<PathBuf>,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// Comma list, one model per horizon.
    #[arg(long)]
    pub horizons: Option<String>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub scada: Option<PathBuf>,
    #[arg(long)]
    pub loss: Option<PathBuf>,
    #[arg(long = "static")]
    pub static_attrs: Option<PathBuf>,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Repeatable; one metrics row per checkpoint.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub scada: Option<PathBuf>,
    #[arg(long)]
    pub loss: Option<PathBuf>,
    #[arg(long = "static")]
    pub static_attrs: Option<PathBuf>,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// Measure wall-clock inference time (makes metrics.csv
    /// non-deterministic).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub scada: Option<PathBuf>,
    #[arg(long)]
    pub loss: Option<PathBuf>,
    #[arg(long = "static")]
    pub static_attrs: Option<PathBuf>,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}
