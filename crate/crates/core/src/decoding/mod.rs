//! Beam search and the two-stage cascade: audio to sub-word units, then
//! units to words, each stage keeping only its best hypothesis.

mod beam;
mod cascade;

pub use beam::{beam_search, greedy_decode, BeamHypothesis, BeamOutput, ModelScorer, StepScorer};
pub use cascade::{cascade_decode, units_to_words, CascadeConfig, CascadeOutput};

use crate::transformer::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("decoding configuration: {0}")]
    Config(String),
    #[error("scorer returned {got} log-probabilities for a vocabulary of {want}")]
    Scorer { got: usize, want: usize },
}
