//! The end-to-end workflow behind the command-line tool: feature caching,
//! vocabularies, training both stages, cascade decoding and scoring.
//!
//! Every command takes a [`RunConfig`] and works under its run directory:
//!
//! ```text
//! <run_dir>/config.toml      effective configuration
//! <run_dir>/features/        <utterance>.feat
//! <run_dir>/ckpt/            units.vocab, words.vocab, <stage>.ckpt
//! <run_dir>/decode/          <manifest>.tsv
//! <run_dir>/reports/         CER reports, loss logs, attention dumps
//! ```

mod commands;
mod config;

pub use commands::{
    cmd_decode, cmd_dump_attention, cmd_features, cmd_lowerbound, cmd_prep_vocab, cmd_score, cmd_train, parse_attention_kind,
    AttentionSelector, DecodeOutcome, FeatureSummary, RunLayout, Stage, TrainOutcome, UtteranceFailure, PERTURB_FACTORS,
};
pub use config::{derive_seed, ModelSpec, RunConfig, StageConfig};

use crate::audio::FrontendError;
use crate::decoding::DecodeError;
use crate::evaluation::EvalError;
use crate::lexicon::LexiconError;
use crate::training::TrainError;
use crate::transformer::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `f` over `items` on up to `jobs` scoped threads, results in input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let jobs = jobs.min(items.len());
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|t| {
                let f = &f;
                scope.spawn(move || items.iter().enumerate().skip(t).step_by(jobs).map(|(i, x)| (i, f(x))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every item visited")).collect()
}
