//! Low-rank rate RNN on the delayed-activation task.

mod checkpoint;
mod dynamics;
mod params;
mod task;

pub use checkpoint::{Checkpoint, NamedArray, ReadoutHeader, CHECKPOINT_FORMAT};
pub use dynamics::{
    bptt_gradient, forward, loss_and_gradient, loss_and_gradient_with_targets, sgd_step, step,
    GradientBundle, ReadoutGradient,
};
pub use params::{
    init_params, InitSpec, Readout, ReadoutKind, RnnParams, TrainableMask, DEFAULT_CONFIDENCE,
    DEFAULT_KAPPA_STAR, DEFAULT_TAU,
};
pub use task::TaskSpec;
