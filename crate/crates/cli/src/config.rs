//! Fully resolved run configuration, written next to every run's outputs.

use std::path::{Path, PathBuf};

use anyhow::Context;
use saunet::model::ArchitectureSpec;
use saunet::nn::DropBlockConfig;
use saunet::optim::TrainConfig;

use crate::args::{DataArgs, EvalFlags, Precision, Preset, TrainArgs};

pub const RESOLVED_CONFIG: &str = "config.json";

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        train: usize,
        val: usize,
        test: usize,
        size: usize,
    },
    Manifest {
        path: PathBuf,
        augment_target: usize,
        val_count: usize,
    },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalSettings {
    pub threshold: f64,
    pub use_fov: bool,
    pub per_image: bool,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub data: DataSource,
    pub architecture: ArchitectureSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub eval: EvalSettings,
    pub precision: Precision,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RESOLVED_CONFIG);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn data_source(d: &DataArgs, preset: Preset) -> anyhow::Result<DataSource> {
    match (&d.manifest, d.synthetic) {
        (Some(path), false) => Ok(DataSource::Manifest {
            path: path.clone(),
            augment_target: d.augment_target,
            val_count: d.val_count.unwrap_or(match preset {
                Preset::Drive => 26,
                Preset::Chase => 13,
            }),
        }),
        (None, true) => Ok(DataSource::Synthetic {
            train: d.synthetic_train,
            val: d.val_count.unwrap_or(d.synthetic_val),
            test: d.synthetic_test,
            size: d.synthetic_size,
        }),
        _ => Err(saunet::Error::Config("give exactly one of --manifest or --synthetic".into()).into()),
    }
}

pub fn eval_settings(e: &EvalFlags) -> EvalSettings {
    EvalSettings {
        threshold: e.threshold,
        use_fov: e.use_fov,
        per_image: e.per_image,
    }
}

impl RunConfig {
    pub fn resolve(command: &str, a: &TrainArgs) -> anyhow::Result<Self> {
        let (batch, drop) = match a.preset {
            Preset::Drive => (8, DropBlockConfig::DRIVE.drop_rate),
            Preset::Chase => (4, DropBlockConfig::CHASE.drop_rate),
        };
        let dropblock = DropBlockConfig::new(a.model.block_size, a.model.drop_rate.unwrap_or(drop))?;
        let architecture = ArchitectureSpec::new(a.model.variant)
            .with_base_channels(a.model.base_channels)
            .with_dropblock(dropblock);
        architecture.validate()?;
        let training = TrainConfig {
            epochs: a.epochs,
            lr_phase1: a.lr,
            lr_phase2: a.lr_phase2,
            phase_boundary: a.phase_boundary.unwrap_or(a.epochs.min(100)),
            batch_size: a.batch_size.unwrap_or(batch),
            seed: a.seed,
        };
        training.validate()?;
        Ok(RunConfig {
            command: command.to_string(),
            data: data_source(&a.data, a.preset)?,
            architecture,
            training: Some(training),
            checkpoint: None,
            eval: eval_settings(&a.eval),
            precision: a.precision,
            seed: a.seed,
            out_dir: a.out_dir.clone(),
        })
    }
}
