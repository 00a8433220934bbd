//! Encoder–decoder Transformer over acoustic frames or token sequences.
//!
//! Every sublayer is wrapped post-norm, `LayerNorm(x + Sublayer(x))`. Feature
//! inputs pass through a linear projection and a layer norm to reach
//! `d_model`; token inputs use an embedding scaled by `√d_model`. Sinusoidal
//! positional encodings are added at the bottom of both stacks.

mod attention;
mod checkpoint;
mod config;
mod model;

pub use attention::{causal_mask, multi_head_attention, positional_encoding, scaled_dot_attention, AttentionOutput, MultiHeadParams};
pub use checkpoint::Checkpoint;
pub use config::{InputKind, ModelConfig, Preset};
pub use model::{AttentionKind, AttentionRecord, EncoderMemory, Graph, ParamStore, Source, Transformer};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("model configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
