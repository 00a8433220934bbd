//! Character error rate scoring and attention-matrix export.

mod attention;
mod cer;

pub use attention::{attention_matrix, render_pgm, write_attention, write_attention_tsv};
pub use cer::{align, characters, score_corpus, units_to_words_lowerbound, EditCounts, LowerBoundItem, ScoreReport, ScoredPair};

use crate::decoding::DecodeError;
use crate::transformer::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("scoring: {0}")]
    Contract(String),
    #[error("attention dump: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
