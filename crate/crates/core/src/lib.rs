//! Mandarin speech recognition as a cascade of two Transformers.
//!
//! The acoustic model reads stacked log-Mel frames and emits sub-word units
//! (toned syllables or phonemes). The word model reads those units and
//! emits words. Decoding keeps the best acoustic hypothesis of a beam of
//! width β and feeds it to a word beam of width γ.
//!
//! The crate is split by stage:
//!
//! - [`tensor`]: dense `f64` matrices and a reverse-mode tape.
//! - [`audio`]: WAV input, manifests, the log-Mel frontend and CMVN.
//! - [`lexicon`]: pronunciation lexicon, unit inventories, vocabularies.
//! - [`transformer`]: the encoder-decoder model and checkpoints.
//! - [`training`]: label-smoothed loss, Adam, warmup schedule, the loop.
//! - [`decoding`]: beam search and the cascade.
//! - [`evaluation`]: CER, the word-stage lower bound, attention dumps.
//! - [`pipeline`]: run configuration and the commands behind the CLI.
//! - [`toy`]: a synthetic corpus for tests.
//!
//! The guide in `book/` walks through each of these with examples.

pub mod tensor;
pub mod audio;
pub mod lexicon;
pub mod transformer;
pub mod training;
pub mod decoding;
pub mod evaluation;
pub mod toy;
pub mod pipeline;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/units.md")]
    mod units {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/transformer.md")]
    mod transformer {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/toy-corpus.md")]
    mod toy_corpus {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
