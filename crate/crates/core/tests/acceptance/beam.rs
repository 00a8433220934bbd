use cascade_asr::decoding::{beam_search, greedy_decode, DecodeError, StepScorer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{verdict, Check};

const BOS: u32 = 100;
const EOS: u32 = 0;

/// Random auto-regressive model: the next-token distribution is a
/// deterministic function of (seed, prefix).
struct Toy {
    vocab: usize,
    seed: u64,
}

impl StepScorer for Toy {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_logprobs(&self, prefix: &[u32]) -> Result<Vec<f64>, DecodeError> {
        let key = prefix.iter().fold(self.seed ^ 0x9e37_79b9, |h, &t| h.wrapping_mul(1_000_003).wrapping_add(t as u64 + 7));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let logits: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(-2.5..2.5)).collect();
        let z = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
        Ok(logits.iter().map(|l| l - z).collect())
    }
}

/// Enumerates every token string of at most `max_len` tokens ending in EOS.
fn argmax(model: &Toy, max_len: usize) -> (Vec<u32>, f64) {
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut stack = vec![(vec![BOS], 0.0f64)];
    while let Some((prefix, lp)) = stack.pop() {
        if prefix.len() > max_len {
            continue;
        }
        for (tok, l) in model.next_logprobs(&prefix).unwrap().into_iter().enumerate() {
            let mut next = prefix.clone();
            next.push(tok as u32);
            let score = lp + l;
            if tok as u32 == EOS {
                let better = match &best {
                    None => true,
                    Some((b, s)) => score > *s || (score == *s && (next.len(), &next) < (b.len(), b)),
                };
                if better {
                    best = Some((next, score));
                }
            } else {
                stack.push((next, score));
            }
        }
    }
    best.unwrap()
}

pub fn check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut exact, mut greedy_same) = (0, 0);
    let mut failures = Vec::new();
    for i in 0..50 {
        let model = Toy {
            vocab: rng.gen_range(2..=4),
            seed: 7000 + i,
        };
        let l = rng.gen_range(1..=4);
        let beam = model.vocab.pow(l as u32);
        let out = beam_search(&model, BOS, EOS, beam, l).map_err(|e| e.to_string())?;
        let (tokens, lp) = argmax(&model, l);
        if !out.truncated && out.best().tokens == tokens && (out.best().logprob - lp).abs() < 1e-12 {
            exact += 1;
        } else {
            failures.push(format!("model {i} (V={}, L={l})", model.vocab));
        }
        let one = beam_search(&model, BOS, EOS, 1, l).map_err(|e| e.to_string())?;
        let g = greedy_decode(&model, BOS, EOS, l).map_err(|e| e.to_string())?;
        if one.best().tokens == g.tokens && one.best().logprob == g.logprob {
            greedy_same += 1;
        } else {
            failures.push(format!("model {i} beam=1 differs from greedy"));
        }
    }
    verdict(
        exact == 50 && greedy_same == 50,
        format!(
            "beam=V^L matches exhaustive argmax on {exact}/50, beam=1 matches greedy on {greedy_same}/50{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}
