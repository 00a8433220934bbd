//! Teacher-forced training: label-smoothed loss, Adam with a warmup
//! schedule, global-norm gradient clipping and a deterministic batch order.

mod loss;
mod optim;
mod trainer;

pub use loss::{label_smoothed_loss, label_smoothed_loss_sum};
pub use optim::{clip_gradients, global_norm, lr_schedule, Adam, GradMap};
pub use trainer::{token_accuracy, Batch, Example, ExampleSource, StepRecord, TrainConfig, TrainState, Trainer};

use crate::tensor::TensorError;
use crate::transformer::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Contract(String),
    #[error("loss became {value} at step {step}")]
    NonFinite { step: u64, value: f64 },
}
