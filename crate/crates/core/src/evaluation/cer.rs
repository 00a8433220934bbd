use std::collections::HashMap;
use std::fmt::Write as _;

use super::EvalError;
use crate::decoding::units_to_words;
use crate::lexicon::Vocabulary;
use crate::transformer::Transformer;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Minimum unit-cost edit script from `reference` to `hypothesis`.
///
/// Among scripts of minimal length, the one with the most substitutions
/// (fewest insertions plus deletions) is reported, so the counts are a
/// function of the pair alone and swapping the arguments swaps insertions
/// with deletions.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    // (distance, insertions + deletions) per cell, minimized lexicographically.
    let mut cost = vec![vec![(0usize, 0usize); m + 1]; n + 1];
    for i in 0..=n {
        cost[i][0] = (i, i);
    }
    for j in 0..=m {
        cost[0][j] = (j, j);
    }
    for i in 1..=n {
        for j in 1..=m {
            let (d, g) = cost[i - 1][j - 1];
            let diag = if reference[i - 1] == hypothesis[j - 1] { (d, g) } else { (d + 1, g) };
            let (d, g) = cost[i - 1][j];
            let del = (d + 1, g + 1);
            let (d, g) = cost[i][j - 1];
            let ins = (d + 1, g + 1);
            cost[i][j] = diag.min(del).min(ins);
        }
    }
    // Walk back along one optimal path to split the gaps.
    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i][j];
        if i > 0 && j > 0 {
            let (d, g) = cost[i - 1][j - 1];
            let same = reference[i - 1] == hypothesis[j - 1];
            if (if same { (d, g) } else { (d + 1, g) }) == here {
                counts.substitutions += !same as usize;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && (cost[i - 1][j].0 + 1, cost[i - 1][j].1 + 1) == here {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// Scoring units of a word sequence: its characters with whitespace
/// removed, except that a bracketed special such as `<UNK>` counts as one.
pub fn characters<S: AsRef<str>>(words: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    for w in words {
        let w = w.as_ref();
        if w.len() > 2 && w.starts_with('<') && w.ends_with('>') {
            out.push(w.to_string());
        } else {
            out.extend(w.chars().filter(|c| !c.is_whitespace()).map(String::from));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub utterance_id: String,
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
    pub counts: EditCounts,
    /// No hypothesis was supplied; every reference character is a deletion.
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub pairs: Vec<ScoredPair>,
    pub reference_chars: usize,
    pub errors: usize,
}

impl ScoreReport {
    /// Percentage of reference characters in error.
    pub fn cer(&self) -> f64 {
        100.0 * self.errors as f64 / self.reference_chars as f64
    }

    pub fn num_missing(&self) -> usize {
        self.pairs.iter().filter(|p| p.missing).count()
    }

    /// Tab-separated per-utterance counts followed by a `TOTAL` line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("utterance\tref_chars\tsub\tdel\tins\tmissing\treference\thypothesis\n");
        let (mut s, mut d, mut i) = (0, 0, 0);
        for p in &self.pairs {
            let c = p.counts;
            s += c.substitutions;
            d += c.deletions;
            i += c.insertions;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                p.utterance_id,
                p.reference.len(),
                c.substitutions,
                c.deletions,
                c.insertions,
                p.missing as u8,
                p.reference.concat(),
                p.hypothesis.concat()
            )
            .unwrap();
        }
        writeln!(out, "TOTAL\t{}\t{s}\t{d}\t{i}\t{}\tCER\t{:.2}", self.reference_chars, self.num_missing(), self.cer()).unwrap();
        out
    }
}

/// Scores word-sequence hypotheses against references, matched by
/// utterance id. References keep their order in the report; hypotheses
/// for unknown ids are ignored.
pub fn score_corpus(references: &[(String, Vec<String>)], hypotheses: &[(String, Vec<String>)]) -> Result<ScoreReport, EvalError> {
    let hyp: HashMap<&str, &Vec<String>> = hypotheses.iter().map(|(id, w)| (id.as_str(), w)).collect();
    let mut pairs = Vec::with_capacity(references.len());
    for (id, words) in references {
        let reference = characters(words);
        let (hypothesis, missing) = match hyp.get(id.as_str()) {
            Some(h) => (characters(h), false),
            None => (Vec::new(), true),
        };
        let counts = align(&reference, &hypothesis);
        pairs.push(ScoredPair {
            utterance_id: id.clone(),
            reference,
            hypothesis,
            counts,
            missing,
        });
    }
    let reference_chars: usize = pairs.iter().map(|p| p.reference.len()).sum();
    if reference_chars == 0 {
        return Err(EvalError::Contract("references contain no characters".into()));
    }
    let errors = pairs.iter().map(|p| p.counts.errors()).sum();
    Ok(ScoreReport {
        pairs,
        reference_chars,
        errors,
    })
}

/// A reference utterance as seen by the word model: its ground-truth unit
/// ids and its transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundItem {
    pub utterance_id: String,
    pub units: Vec<u32>,
    pub transcript: Vec<String>,
}

/// Error of the word stage alone: each reference unit sequence is decoded
/// to words and scored against its transcript.
pub fn units_to_words_lowerbound(
    word_model: &Transformer,
    word_vocab: &Vocabulary,
    items: &[LowerBoundItem],
    gamma: usize,
    max_words: usize,
) -> Result<(ScoreReport, Vec<(String, Vec<String>)>), EvalError> {
    let mut hyps = Vec::with_capacity(items.len());
    for item in items {
        let (ids, _, _) = units_to_words(word_model, &item.units, gamma, max_words)?;
        let words = word_vocab.decode(&ids).map_err(|e| EvalError::Contract(e.to_string()))?;
        hyps.push((item.utterance_id.clone(), words));
    }
    let refs: Vec<(String, Vec<String>)> = items.iter().map(|i| (i.utterance_id.clone(), i.transcript.clone())).collect();
    Ok((score_corpus(&refs, &hyps)?, hyps))
}
