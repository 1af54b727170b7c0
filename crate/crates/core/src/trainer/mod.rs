//! The training loop: twin augmentation, the combined objective, Adam,
//! queue and momentum updates, checkpoints and inference.

mod check;
mod config;
mod report;
mod run;
mod state;
mod step;

pub use check::{CheckFixture, LossKind};
pub use config::{TrainConfig, CONFIG_KEYS};
pub use report::{histogram_entropy, EpochAccumulator, EpochReport, Scores, StepReport, METRICS_HEADER};
pub use run::{has_converged, train, Evaluation, StepOutcome, Trainer};
pub use state::{Counters, TrainState, CHECKPOINT_FORMAT};
pub use step::{argmax, augment_batch, combined_loss, infer, train_step, train_step_mode, StepMode};
