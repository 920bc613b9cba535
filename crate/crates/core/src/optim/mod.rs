//! SGD stepping, the training loop with gradient accumulation and mixed
//! precision, the learning-rate range finder and progressive resizing.

mod config;
mod lr_find;
mod schedule;
mod step;
mod train;

pub use config::{PrecisionMode, ResizeSchedule, TrainConfig};
pub use lr_find::{
    lr_sweep, lr_sweep_with, suggest_lr_valley, sweep_lrs, SweepPoint, SweepRecord, SweepSettings, DEFAULT_LR_MAX,
    DEFAULT_LR_MIN, DEFAULT_SMOOTHING, DEFAULT_SWEEP_STEPS, DIVERGENCE_FACTOR, MIN_SWEEP_STEPS,
};
pub use schedule::{progressive_schedule, ScheduleStep};
pub use step::{mixed_precision_step, sgd_step, MixedPrecisionStats, StepOutcome};
pub use train::{fit, fit_with, train_epoch, EpochMetrics, FitReport};
