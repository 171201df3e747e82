use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, lr_for_epoch, AdamState, TrainConfig};
use crate::data::{derive_seed, FundusSample};
use crate::error::{Error, Result};
use crate::metrics::{Aggregation, MetricAccumulator, MetricReport};
use crate::model::{save_checkpoint, Network};
use crate::nn::Pass;
use crate::scalar::Scalar;
use crate::tensor::{backward, bce_loss, Tensor};

/// One line of the training-curve log.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_metrics: Option<MetricReport>,
}

/// Stacks samples into `[n, 3, h, w]` images and `[n, 1, h, w]` masks.
pub(crate) fn batch_of<T: Scalar>(samples: &[&FundusSample<T>]) -> Result<(Tensor<T>, Tensor<T>)> {
    let first = samples.first().ok_or_else(|| Error::Data("empty batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut images = Vec::with_capacity(samples.len() * 3 * h * w);
    let mut masks = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if (s.height(), s.width()) != (h, w) {
            return Err(Error::Data(format!(
                "sample {} is {}x{}, batch is {h}x{w}",
                s.id,
                s.height(),
                s.width()
            )));
        }
        images.extend_from_slice(s.image.data());
        masks.extend_from_slice(s.mask.data());
    }
    let n = samples.len();
    Ok((Tensor::from_vec([n, 3, h, w], images)?, Tensor::from_vec([n, 1, h, w], masks)?))
}

/// One pass over `samples` in a shuffle order seeded by `(cfg.seed, epoch)`;
/// returns the sample-weighted mean training loss. The last partial batch
/// is kept.
pub fn train_epoch<T: Scalar>(
    net: &mut Network<T>,
    state: &mut AdamState<T>,
    samples: &[FundusSample<T>],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    state.lr = lr_for_epoch(epoch, cfg)?;
    let tag = epoch.to_string();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["shuffle", &tag])));
    let mut noise = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["dropblock", &tag]));

    let mut total = 0.0;
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let batch: Vec<&FundusSample<T>> = chunk.iter().map(|&i| &samples[i]).collect();
        let (x, y) = batch_of(&batch)?;
        let prob = net.forward(&x, &mut Pass::Train { rng: &mut noise })?;
        let loss = bce_loss(&prob, &y)?;
        let value = loss.item()?.to_f64_lossy();
        if !value.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: b + 1,
                loss: value,
            });
        }
        net.zero_grad();
        backward(&loss)?;
        adam_step(net, state)?;
        total += value * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Evaluation-mode loss and metrics over `samples`.
pub fn evaluate<T: Scalar>(
    net: &Network<T>,
    samples: &[FundusSample<T>],
    batch_size: usize,
    threshold: f64,
    aggregation: Aggregation,
) -> Result<(f64, MetricReport)> {
    if samples.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let mut acc = MetricAccumulator::new(threshold, aggregation)?;
    let mut total = 0.0;
    let refs: Vec<&FundusSample<T>> = samples.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let (x, y) = batch_of(chunk)?;
        let prob = net.infer(&x)?.detach();
        total += bce_loss(&prob, &y)?.item()?.to_f64_lossy() * chunk.len() as f64;
        for (i, s) in chunk.iter().enumerate() {
            let gt = y.sample(i)?;
            let region = s.fov.as_ref().map(|f| f.reshape(gt.shape())).transpose()?;
            acc.add(&prob.sample(i)?, &gt, region.as_ref())?;
        }
    }
    Ok((total / samples.len() as f64, acc.finish()))
}

/// Evaluation-mode mean BCE over `samples`.
pub fn evaluate_loss<T: Scalar>(net: &Network<T>, samples: &[FundusSample<T>], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let refs: Vec<&FundusSample<T>> = samples.iter().collect();
    let mut total = 0.0;
    for chunk in refs.chunks(batch_size.max(1)) {
        let (x, y) = batch_of(chunk)?;
        let prob = net.infer(&x)?.detach();
        total += bce_loss(&prob, &y)?.item()?.to_f64_lossy() * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Result of [`Trainer::run`].
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    /// Evaluation-mode training loss before the first update.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochReport>,
    /// Epoch whose weights are in the best checkpoint.
    pub best_epoch: usize,
}

impl TrainingOutcome {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.train_loss)
    }
}

/// Runs the full schedule. With an output directory it writes `curve.jsonl`
/// (one [`EpochReport`] per line), `best.ckpt` (lowest validation loss, or
/// lowest training loss without a validation set) and `final.ckpt`.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub out_dir: Option<PathBuf>,
    pub threshold: f64,
    pub aggregation: Aggregation,
}

pub const CURVE_LOG: &str = "curve.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

impl Trainer {
    pub fn new(config: TrainConfig) -> Self {
        Trainer {
            config,
            out_dir: None,
            threshold: 0.5,
            aggregation: Aggregation::Pooled,
        }
    }

    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(name))
    }

    pub fn run<T: Scalar>(
        &self,
        net: &mut Network<T>,
        train: &[FundusSample<T>],
        val: &[FundusSample<T>],
    ) -> Result<TrainingOutcome> {
        self.run_with(net, train, val, |_| {})
    }

    /// Like [`Trainer::run`], calling `observe` after every epoch.
    pub fn run_with<T: Scalar>(
        &self,
        net: &mut Network<T>,
        train: &[FundusSample<T>],
        val: &[FundusSample<T>],
        mut observe: impl FnMut(&EpochReport),
    ) -> Result<TrainingOutcome> {
        self.config.validate()?;
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        if let Some(dir) = &self.out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut log = match self.path(CURVE_LOG) {
            Some(p) => Some((std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?, p)),
            None => None,
        };

        let initial_train_loss = evaluate_loss(net, train, self.config.batch_size)?;
        let mut state = AdamState::new(self.config.lr_phase1);
        let mut epochs = Vec::with_capacity(self.config.epochs);
        let mut best: Option<(f64, usize)> = None;
        for epoch in 1..=self.config.epochs {
            let train_loss = train_epoch(net, &mut state, train, &self.config, epoch)?;
            let (val_loss, val_metrics) = if val.is_empty() {
                (None, None)
            } else {
                let (l, m) = evaluate(net, val, self.config.batch_size, self.threshold, self.aggregation)?;
                (Some(l), Some(m))
            };
            let report = EpochReport {
                epoch,
                lr: state.lr,
                train_loss,
                val_loss,
                val_metrics,
            };
            if let Some((file, path)) = &mut log {
                let line = serde_json::to_string(&report)?;
                writeln!(file, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
            }
            let score = val_loss.unwrap_or(train_loss);
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, epoch));
                if let Some(p) = self.path(BEST_CHECKPOINT) {
                    save_checkpoint(net, Some(&state), &p)?;
                }
            }
            observe(&report);
            epochs.push(report);
        }
        if let Some(p) = self.path(FINAL_CHECKPOINT) {
            save_checkpoint(net, Some(&state), &p)?;
        }
        Ok(TrainingOutcome {
            initial_train_loss,
            epochs,
            best_epoch: best.map_or(0, |(_, e)| e),
        })
    }
}

/// Reads a curve log back.
pub fn read_curve_log(path: &Path) -> Result<Vec<EpochReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
