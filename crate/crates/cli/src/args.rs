use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saunet::model::Variant;

#[derive(Debug, Parser)]
#[command(name = "saunet", version, about = "Train, evaluate and verify SA-UNet vessel segmenters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one variant and write checkpoints, a curve log and the resolved config.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split; writes a metric report and overlays.
    Eval(EvalArgs),
    /// Segment standalone images with a checkpoint.
    Predict(PredictArgs),
    /// Print per-layer parameter counts.
    CountParams(CountArgs),
    /// Train and evaluate all five variants under one seed and split.
    Ablate(TrainArgs),
    /// Finite-difference verification of every gradient.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic dataset as PNG files plus a manifest.
    SynthData(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Dataset presets that fix batch size, drop rate and validation count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Drive,
    Chase,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset manifest (line-delimited JSON).
    #[arg(long, conflicts_with = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Use the built-in synthetic vessel generator instead of a manifest.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 200)]
    pub synthetic_train: usize,
    #[arg(long, default_value_t = 20)]
    pub synthetic_val: usize,
    #[arg(long, default_value_t = 50)]
    pub synthetic_test: usize,
    /// Side length of synthetic images.
    #[arg(long, default_value_t = 64)]
    pub synthetic_size: usize,
    /// Augmented training-set size for manifest data (0 disables augmentation).
    #[arg(long, default_value_t = 256)]
    pub augment_target: usize,
    /// Validation images drawn from the augmented set [preset: 26 / 13].
    #[arg(long)]
    pub val_count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_variant, default_value = "sa-unet")]
    pub variant: Variant,
    #[arg(long, default_value_t = 16)]
    pub base_channels: usize,
    #[arg(long, default_value_t = 7)]
    pub block_size: usize,
    /// DropBlock drop rate [preset: 0.18 / 0.13].
    #[arg(long)]
    pub drop_rate: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalFlags {
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Restrict metrics to the field of view when the data provides one.
    #[arg(long)]
    pub use_fov: bool,
    /// Average per-image metrics instead of pooling pixels.
    #[arg(long)]
    pub per_image: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long, value_enum, default_value_t = Preset::Drive)]
    pub preset: Preset,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr_phase2: f64,
    /// Last epoch trained at --lr [default: min(100, epochs)].
    #[arg(long)]
    pub phase_boundary: Option<usize>,
    /// [preset: 8 / 4]
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[arg(long, default_value = "runs/latest")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub eval: EvalFlags,
    /// Fail unless the checkpoint holds this variant.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Seed of the synthetic data (must match training).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value = "runs/eval")]
    pub out_dir: PathBuf,
    /// Skip writing overlay images.
    #[arg(long)]
    pub no_overlays: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input images.
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value = "runs/predict")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CountArgs {
    #[arg(long, value_parser = parse_variant, default_value = "sa-unet")]
    pub variant: Variant,
    #[arg(long, default_value_t = 16)]
    pub base_channels: usize,
    /// Check all five variants against the reference totals; exit nonzero on mismatch.
    #[arg(long)]
    pub verify_table4: bool,
    /// Emit JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Base channels of the end-to-end network.
    #[arg(long, default_value_t = 4)]
    pub base_channels: usize,
    /// Input side of the end-to-end network.
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    /// Check at most this many elements per network tensor (default: all).
    #[arg(long)]
    pub limit: Option<usize>,
    /// Skip the end-to-end network.
    #[arg(long)]
    pub skip_network: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub train: usize,
    #[arg(long, default_value_t = 50)]
    pub test: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "data/synthetic")]
    pub out_dir: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: saunet::Error| e.to_string())
}
