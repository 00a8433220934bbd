use super::{beam_search, DecodeError, ModelScorer};
use crate::lexicon::{BOS_ID, EOS_ID};
use crate::tensor::Tensor;
use crate::transformer::{Source, Transformer};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    /// Stage-1 beam.
    pub beta: usize,
    /// Stage-2 beam.
    pub gamma: usize,
    pub max_units: usize,
    pub max_words: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            beta: 13,
            gamma: 6,
            max_units: 200,
            max_words: 100,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beta == 0 || self.gamma == 0 || self.max_units == 0 || self.max_words == 0 {
            return Err(DecodeError::Config("beams and maximum lengths must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    /// Best stage-1 unit ids, without `<S>`/`</S>`.
    pub units: Vec<u32>,
    /// Best stage-2 word ids, without `<S>`/`</S>`.
    pub words: Vec<u32>,
    pub unit_logprob: f64,
    pub word_logprob: f64,
    /// Either stage hit its length limit without emitting `</S>`.
    pub truncated: bool,
}

fn strip(tokens: &[u32]) -> Vec<u32> {
    tokens.iter().copied().filter(|&t| t != BOS_ID && t != EOS_ID).collect()
}

/// Stage 2 alone: the best word sequence for a unit sequence.
pub fn units_to_words(word_model: &Transformer, units: &[u32], gamma: usize, max_words: usize) -> Result<(Vec<u32>, f64, bool), DecodeError> {
    if units.is_empty() {
        return Ok((Vec::new(), 0.0, false));
    }
    let memory = word_model.encode(&Source::Tokens(units))?;
    let out = beam_search(&ModelScorer { model: word_model, memory }, BOS_ID, EOS_ID, gamma, max_words)?;
    let best = out.best();
    Ok((strip(&best.tokens), best.logprob, out.truncated))
}

/// The acoustic model's best unit sequence, then the word model's best
/// word sequence for it.
pub fn cascade_decode(acoustic: &Transformer, word_model: &Transformer, features: &Tensor, cfg: &CascadeConfig) -> Result<CascadeOutput, DecodeError> {
    cfg.validate()?;
    if word_model.config().input_dim != acoustic.config().output_vocab_size {
        return Err(DecodeError::Config(format!(
            "word model reads {} unit ids but the acoustic model emits {}",
            word_model.config().input_dim,
            acoustic.config().output_vocab_size
        )));
    }
    let memory = acoustic.encode(&Source::Features(features))?;
    let stage1 = beam_search(&ModelScorer { model: acoustic, memory }, BOS_ID, EOS_ID, cfg.beta, cfg.max_units)?;
    let best = stage1.best();
    let units = strip(&best.tokens);
    let (words, word_logprob, word_truncated) = units_to_words(word_model, &units, cfg.gamma, cfg.max_words)?;
    Ok(CascadeOutput {
        units,
        words,
        unit_logprob: best.logprob,
        word_logprob,
        truncated: stage1.truncated || word_truncated,
    })
}
