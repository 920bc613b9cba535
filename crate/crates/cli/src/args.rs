use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "paddyforge", version, about = "Train, evaluate and ensemble small CNN image classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network on a class-per-directory PPM dataset.
    Train(TrainArgs),
    /// Run the learning-rate range test and print the suggested rate.
    LrFind(LrFindArgs),
    /// Evaluate a checkpoint, optionally with test-time augmentation.
    Eval(EvalArgs),
    /// Evaluate a weighted ensemble of checkpoints.
    Ensemble(EnsembleArgs),
    /// Write a synthetic class-per-directory dataset.
    GenSynth(GenSynthArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset root with one sub-directory per class.
    #[arg(long)]
    pub data: PathBuf,
    /// Fraction of each class held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Network input size (`HxW` or one side). Defaults to the size of the first image.
    #[arg(long)]
    pub size: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub arch: String,
    #[arg(long)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// A learning rate, or `auto` to run the range test first.
    #[arg(long, default_value = "auto")]
    pub lr: String,
    /// Gradient accumulation factor: micro-batch size is batch / accum.
    #[arg(long, default_value_t = 1)]
    pub accum: usize,
    #[arg(long, default_value = "fp32")]
    pub precision: String,
    #[arg(long, default_value_t = 1.0)]
    pub loss_scale: f32,
    #[arg(long, default_value = "minimal")]
    pub aug: String,
    /// Enable mixup, optionally with the Beta(a, a) parameter.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.4")]
    pub mixup: Option<f64>,
    /// Progressive resizing as SMALL:EPOCH:LARGE.
    #[arg(long)]
    pub resize: Option<String>,
    /// `random` or `checkpoint PATH`.
    #[arg(long, num_args = 1..=2, value_names = ["MODE", "PATH"], default_values_t = ["random".to_string()])]
    pub init: Vec<String>,
    #[arg(long, default_value = "none")]
    pub freeze: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LrFindArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub arch: String,
    #[arg(long, default_value_t = 1e-7)]
    pub lr_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lr_max: f64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.98)]
    pub beta: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Number of augmented copies averaged per image; 0 disables TTA.
    #[arg(long, default_value_t = 0)]
    pub tta: usize,
    /// Augmentation policy used for TTA copies.
    #[arg(long, default_value = "minimal")]
    pub tta_policy: String,
    /// Evaluate only the validation part of this split instead of the whole dataset.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// `CHECKPOINT:WEIGHT`, repeated.
    #[arg(long = "member", required = true)]
    pub members: Vec<String>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub per_class: usize,
    #[arg(long, default_value = "32x32")]
    pub size: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
