//! Vocabularies and the word → syllable → phoneme lexicon.
//!
//! Two UTF-8 text files describe a lexicon, both whitespace-separated with
//! one entry per line:
//!
//! * the word lexicon, `word syl1 syl2 …`, where repeated words add
//!   alternative pronunciations in order of preference;
//! * the syllable table, `syllable phone1 phone2 …`, typically an initial
//!   and a toned final (`hao3 h ao3`).
//!
//! Transcripts are mapped to unit sequences with the first listed
//! pronunciation of every word.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub const PAD: &str = "<PAD>";
pub const UNK: &str = "<UNK>";
pub const BOS: &str = "<S>";
pub const EOS: &str = "</S>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

const SPECIALS: [&str; 4] = [PAD, UNK, BOS, EOS];

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("token id {id} out of range for vocabulary of {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("malformed token sequence: {0}")]
    Sequence(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<String, LexiconError> {
    fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Sub-word unit used by the acoustic model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitLevel {
    #[default]
    Syllable,
    Phoneme,
}

impl FromStr for UnitLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "syllable" => Ok(UnitLevel::Syllable),
            "phoneme" => Ok(UnitLevel::Phoneme),
            other => Err(format!("unknown unit level `{other}` (expected syllable or phoneme)")),
        }
    }
}

impl fmt::Display for UnitLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitLevel::Syllable => "syllable",
            UnitLevel::Phoneme => "phoneme",
        })
    }
}

/// What a token sequence's ids index into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VocabKind {
    Phoneme,
    Syllable,
    Word,
}

impl From<UnitLevel> for VocabKind {
    fn from(level: UnitLevel) -> Self {
        match level {
            UnitLevel::Syllable => VocabKind::Syllable,
            UnitLevel::Phoneme => VocabKind::Phoneme,
        }
    }
}

/// Dense symbol ↔ id mapping. Ids 0–3 are `<PAD>`, `<UNK>`, `<S>`, `</S>`;
/// the remaining symbols follow in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Sorted unique `units` appended after the four special tokens.
    /// Special symbols appearing among `units` are not duplicated.
    pub fn build<'a>(units: impl IntoIterator<Item = &'a str>) -> Self {
        let unique: BTreeSet<&str> = units.into_iter().filter(|u| !SPECIALS.contains(u)).collect();
        let symbols = SPECIALS.iter().copied().chain(unique).map(str::to_string).collect();
        Self::from_symbols(symbols)
    }

    fn from_symbols(symbols: Vec<String>) -> Self {
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Vocabulary { symbols, index }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Number of non-special symbols.
    pub fn num_units(&self) -> usize {
        self.symbols.len() - SPECIALS.len()
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn id_or_unk(&self, symbol: &str) -> u32 {
        self.id(symbol).unwrap_or(UNK_ID)
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// `<S> symbols… </S>`, unknown symbols becoming `<UNK>`.
    pub fn encode<S: AsRef<str>>(&self, kind: VocabKind, symbols: &[S]) -> TokenSequence {
        let mut ids = Vec::with_capacity(symbols.len() + 2);
        ids.push(BOS_ID);
        ids.extend(symbols.iter().map(|s| self.id_or_unk(s.as_ref())));
        ids.push(EOS_ID);
        TokenSequence { kind, ids }
    }

    /// Symbols of the inner tokens, dropping `<S>`, `</S>` and `<PAD>`.
    pub fn decode(&self, ids: &[u32]) -> Result<Vec<String>, LexiconError> {
        ids.iter()
            .filter(|&&id| id != BOS_ID && id != EOS_ID && id != PAD_ID)
            .map(|&id| {
                self.symbol(id).map(str::to_string).ok_or(LexiconError::IdOutOfRange { id, size: self.len() })
            })
            .collect()
    }

    /// One symbol per line; the line number (from 0) is the id.
    pub fn write(&self, path: &Path) -> Result<(), LexiconError> {
        let mut text = self.symbols.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|source| LexiconError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = read(path)?;
        let symbols: Vec<String> = text.lines().map(str::to_string).collect();
        let file = path.display().to_string();
        for (i, special) in SPECIALS.iter().enumerate() {
            if symbols.get(i).map(String::as_str) != Some(special) {
                return Err(LexiconError::Parse {
                    file,
                    line: i + 1,
                    message: format!("expected reserved symbol {special}"),
                });
            }
        }
        let mut seen = BTreeSet::new();
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.contains(char::is_whitespace) || !seen.insert(s.as_str()) {
                return Err(LexiconError::Parse {
                    file,
                    line: i + 1,
                    message: format!("invalid or duplicate symbol `{s}`"),
                });
            }
        }
        Ok(Self::from_symbols(symbols))
    }
}

/// Integer-encoded symbols, framed as `<S> … </S>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub kind: VocabKind,
    pub ids: Vec<u32>,
}

impl TokenSequence {
    /// Checks that ids fit the vocabulary and that `<S>`/`</S>` appear only
    /// at the ends.
    pub fn new(kind: VocabKind, ids: Vec<u32>, vocab_size: usize) -> Result<Self, LexiconError> {
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(LexiconError::IdOutOfRange { id, size: vocab_size });
        }
        if ids.iter().skip(1).any(|&id| id == BOS_ID) {
            return Err(LexiconError::Sequence("<S> after position 0".into()));
        }
        if let Some(pos) = ids.iter().position(|&id| id == EOS_ID) {
            if pos + 1 != ids.len() {
                return Err(LexiconError::Sequence("</S> before the end".into()));
            }
        }
        Ok(TokenSequence { kind, ids })
    }

    /// Ids between the framing tokens.
    pub fn inner(&self) -> &[u32] {
        let start = usize::from(self.ids.first() == Some(&BOS_ID));
        let end = self.ids.len() - usize::from(self.ids.len() > start && self.ids.last() == Some(&EOS_ID));
        &self.ids[start..end]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    words: IndexMap<String, Vec<Vec<String>>>,
    syllables: IndexMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn load(lexicon: &Path, syllable_table: &Path) -> Result<Self, LexiconError> {
        Self::parse(
            &read(lexicon)?,
            &lexicon.display().to_string(),
            &read(syllable_table)?,
            &syllable_table.display().to_string(),
        )
    }

    /// Parses the two file bodies; the names are used in error messages.
    pub fn parse(lexicon_text: &str, lexicon_name: &str, syllable_text: &str, syllable_name: &str) -> Result<Self, LexiconError> {
        let err = |file: &str, line: usize, message: String| LexiconError::Parse {
            file: file.to_string(),
            line,
            message,
        };
        let mut syllables: IndexMap<String, Vec<String>> = IndexMap::new();
        for (i, line) in syllable_text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(syl) = fields.next() else { continue };
            let phones: Vec<String> = fields.map(str::to_string).collect();
            if phones.is_empty() {
                return Err(err(syllable_name, i + 1, format!("syllable `{syl}` has no phonemes")));
            }
            match syllables.get(syl) {
                Some(existing) if *existing != phones => {
                    return Err(err(
                        syllable_name,
                        i + 1,
                        format!("conflicting decomposition for `{syl}`: {} vs {}", existing.join(" "), phones.join(" ")),
                    ));
                }
                Some(_) => {}
                None => {
                    syllables.insert(syl.to_string(), phones);
                }
            }
        }
        let mut words: IndexMap<String, Vec<Vec<String>>> = IndexMap::new();
        for (i, line) in lexicon_text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let pron: Vec<String> = fields.map(str::to_string).collect();
            if pron.is_empty() {
                return Err(err(lexicon_name, i + 1, format!("word `{word}` has no pronunciation")));
            }
            if let Some(unknown) = pron.iter().find(|s| !syllables.contains_key(*s)) {
                return Err(err(lexicon_name, i + 1, format!("word `{word}` uses unknown syllable `{unknown}`")));
            }
            let entry = words.entry(word.to_string()).or_default();
            if !entry.contains(&pron) {
                entry.push(pron);
            }
        }
        Ok(Lexicon { words, syllables })
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.keys().map(String::as_str)
    }

    pub fn pronunciations(&self, word: &str) -> Option<&[Vec<String>]> {
        self.words.get(word).map(Vec::as_slice)
    }

    pub fn phonemes_of(&self, syllable: &str) -> Option<&[String]> {
        self.syllables.get(syllable).map(Vec::as_slice)
    }

    /// Every syllable in the table, in file order.
    pub fn syllable_inventory(&self) -> impl Iterator<Item = &str> {
        self.syllables.keys().map(String::as_str)
    }

    /// Every phoneme used by the syllable table.
    pub fn phoneme_inventory(&self) -> BTreeSet<&str> {
        self.syllables.values().flatten().map(String::as_str).collect()
    }

    /// Unit symbols for a word sequence using each word's first
    /// pronunciation; out-of-lexicon words become a single `<UNK>`.
    pub fn units_for<S: AsRef<str>>(&self, transcript: &[S], level: UnitLevel) -> Vec<String> {
        let mut out = Vec::new();
        for word in transcript {
            match self.words.get(word.as_ref()) {
                None => out.push(UNK.to_string()),
                Some(prons) => {
                    let syls = &prons[0];
                    match level {
                        UnitLevel::Syllable => out.extend(syls.iter().cloned()),
                        UnitLevel::Phoneme => out.extend(self.expand_syllables(syls)),
                    }
                }
            }
        }
        out
    }

    /// Replaces each syllable with its phonemes; `<UNK>` and unknown
    /// syllables pass through as `<UNK>`.
    pub fn expand_syllables<S: AsRef<str>>(&self, syllables: &[S]) -> Vec<String> {
        syllables
            .iter()
            .flat_map(|s| match self.syllables.get(s.as_ref()) {
                Some(p) => p.clone(),
                None => vec![UNK.to_string()],
            })
            .collect()
    }
}

/// `<S> units </S>` for a transcript, encoded with `vocab`.
pub fn transcript_to_units<S: AsRef<str>>(transcript: &[S], lexicon: &Lexicon, level: UnitLevel, vocab: &Vocabulary) -> TokenSequence {
    vocab.encode(level.into(), &lexicon.units_for(transcript, level))
}
