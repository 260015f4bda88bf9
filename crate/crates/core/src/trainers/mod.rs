//! Training regimes: bilevel learned augmentation, FLAG, and the plain and
//! uniform-noise baselines, with the shared schedule and early stopping.

mod bilevel;
mod experiment;
mod flag;
pub mod hypercheck;
mod problem;
mod schedule;

pub use bilevel::{
    inner_step, outer_step, BilevelProblem, InnerConfig, InnerOutcome, OuterConfig, OuterOutcome,
    TrainLoss, UnrollWindow,
};
pub use experiment::{run_experiment, EpochMetrics, ExperimentResult, Summary};
pub use flag::{ascent_update, flag_ascent_losses, flag_train_step, AscentRule, FlagConfig};
pub use problem::{Augmentation, ClassifierProblem};
pub use schedule::{EarlyStopping, MultiStepLr};
