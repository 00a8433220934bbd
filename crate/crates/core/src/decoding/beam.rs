use std::cmp::Ordering;

use super::DecodeError;
use crate::lexicon::{BOS_ID, PAD_ID};
use crate::transformer::{EncoderMemory, Transformer};

/// An auto-regressive model seen from the decoder's side.
pub trait StepScorer {
    fn vocab_size(&self) -> usize;
    /// Log-probabilities of every next token given `prefix`, which starts
    /// with the start symbol. `-inf` marks tokens that may not follow.
    fn next_logprobs(&self, prefix: &[u32]) -> Result<Vec<f64>, DecodeError>;
}

/// A Transformer decoder over a fixed encoder memory. PAD and `<S>` are
/// never proposed.
pub struct ModelScorer<'m> {
    pub model: &'m Transformer,
    pub memory: EncoderMemory,
}

impl StepScorer for ModelScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.model.config().output_vocab_size
    }

    fn next_logprobs(&self, prefix: &[u32]) -> Result<Vec<f64>, DecodeError> {
        let mut lp = self.model.decode_step(&self.memory, prefix)?;
        lp[PAD_ID as usize] = f64::NEG_INFINITY;
        lp[BOS_ID as usize] = f64::NEG_INFINITY;
        Ok(lp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    /// Starts with the start symbol; ends with the end symbol iff finished.
    pub tokens: Vec<u32>,
    pub logprob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    /// Higher log-probability first, then shorter, then smaller token ids.
    fn rank(&self, other: &Self) -> Ordering {
        other
            .logprob
            .total_cmp(&self.logprob)
            .then(self.tokens.len().cmp(&other.tokens.len()))
            .then_with(|| self.tokens.cmp(&other.tokens))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamOutput {
    /// Best first. Finished hypotheses only, unless `truncated`.
    pub hypotheses: Vec<BeamHypothesis>,
    /// No hypothesis emitted the end symbol within `max_len` tokens; the
    /// list then holds the best unfinished ones.
    pub truncated: bool,
}

impl BeamOutput {
    pub fn best(&self) -> &BeamHypothesis {
        &self.hypotheses[0]
    }
}

fn scores(scorer: &dyn StepScorer, prefix: &[u32]) -> Result<Vec<f64>, DecodeError> {
    let lp = scorer.next_logprobs(prefix)?;
    if lp.len() != scorer.vocab_size() {
        return Err(DecodeError::Scorer {
            got: lp.len(),
            want: scorer.vocab_size(),
        });
    }
    Ok(lp)
}

/// Standard beam search without length normalization.
///
/// Every live hypothesis is extended by every token with a finite score;
/// the best `beam_size` extensions survive, and those ending in `eos` move
/// to the finished pool. The search stops when nothing is live, after
/// `max_len` generated tokens, or once no live hypothesis scores above the
/// best finished one (extensions can only lower a score, so the best result
/// is already fixed; later finishers would only lengthen the pool).
pub fn beam_search(scorer: &dyn StepScorer, bos: u32, eos: u32, beam_size: usize, max_len: usize) -> Result<BeamOutput, DecodeError> {
    if beam_size == 0 || max_len == 0 {
        return Err(DecodeError::Config("beam size and maximum length must be at least 1".into()));
    }
    let mut live = vec![BeamHypothesis {
        tokens: vec![bos],
        logprob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();
    for _ in 0..max_len {
        let mut candidates = Vec::new();
        for h in &live {
            for (tok, lp) in scores(scorer, &h.tokens)?.into_iter().enumerate() {
                if !lp.is_finite() {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(tok as u32);
                candidates.push(BeamHypothesis {
                    tokens,
                    logprob: h.logprob + lp,
                    finished: tok as u32 == eos,
                });
            }
        }
        candidates.sort_by(BeamHypothesis::rank);
        candidates.truncate(beam_size);
        let (done, rest): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|h| h.finished);
        finished.extend(done);
        live = rest;
        let best_done = finished.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
        if live.iter().all(|h| h.logprob <= best_done) {
            break;
        }
    }
    let truncated = finished.is_empty();
    let mut hypotheses = if truncated { live } else { finished };
    if hypotheses.is_empty() {
        // Only reachable when the scorer allows nothing at the first step.
        hypotheses.push(BeamHypothesis {
            tokens: vec![bos],
            logprob: f64::NEG_INFINITY,
            finished: false,
        });
    }
    hypotheses.sort_by(BeamHypothesis::rank);
    Ok(BeamOutput { hypotheses, truncated })
}

/// Repeatedly takes the highest-scoring next token (lowest id on ties).
pub fn greedy_decode(scorer: &dyn StepScorer, bos: u32, eos: u32, max_len: usize) -> Result<BeamHypothesis, DecodeError> {
    let mut h = BeamHypothesis {
        tokens: vec![bos],
        logprob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let lp = scores(scorer, &h.tokens)?;
        let best = (0..lp.len()).fold(0, |b, i| if lp[i] > lp[b] { i } else { b });
        if !lp[best].is_finite() {
            break;
        }
        h.tokens.push(best as u32);
        h.logprob += lp[best];
        if best as u32 == eos {
            h.finished = true;
            break;
        }
    }
    Ok(h)
}
