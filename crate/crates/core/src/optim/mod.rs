//! Adam, the two-phase learning-rate schedule and the training loop.

mod adam;
mod schedule;
mod train;

pub use adam::{adam_step, AdamState, Moments, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use schedule::{lr_for_epoch, TrainConfig};
pub use train::{
    evaluate, evaluate_loss, read_curve_log, train_epoch, EpochReport, Trainer, TrainingOutcome, BEST_CHECKPOINT,
    CURVE_LOG, FINAL_CHECKPOINT,
};
