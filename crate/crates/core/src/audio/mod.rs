//! Waveform input and the log-Mel feature pipeline.
//!
//! The pipeline per utterance is [`log_mel`] → [`cmvn_by_speaker`] (over all
//! of a speaker's utterances) → [`stack_and_downsample`]. With the default
//! [`FrontendConfig`] that yields 320-dimensional frames at a 30 ms rate.

mod cache;
mod features;
mod manifest;
mod mel;
mod perturb;
mod wav;

pub use cache::{read_features, write_features};
pub use features::{cmvn_by_speaker, stack_and_downsample, FeatureMatrix};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use mel::{hz_to_mel, log_mel, mel_to_hz, FrontendConfig, MelFilterbank};
pub use perturb::speed_perturb;
pub use wav::{read_wav, write_wav, AudioSignal};

use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("audio has {samples} samples, shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("invalid frontend configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: expected mono audio, found {channels} channels")]
    MultiChannel { path: PathBuf, channels: u16 },
    #[error("{path}: expected 16-bit PCM, found {bits}-bit {format}")]
    UnsupportedFormat {
        path: PathBuf,
        bits: u16,
        format: &'static str,
    },
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: malformed feature file: {message}")]
    Cache { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}
