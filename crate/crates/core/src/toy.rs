//! A small synthetic Mandarin corpus for smoke tests and overfitting runs.
//!
//! Twenty toned syllables, each written as one character, form thirty
//! words. Every syllable is rendered as a fixed pair of tones, so a
//! syllable always produces the same spectral pattern up to speaker gain
//! and a little noise.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{write_manifest, write_wav, AudioSignal, FrontendError, ManifestEntry};
use crate::lexicon::Lexicon;

pub const SAMPLE_RATE: u32 = 16_000;

/// (syllable, character, phonemes).
pub const SYLLABLES: [(&str, &str, &str); 20] = [
    ("ni3", "你", "n i3"),
    ("hao3", "好", "h ao3"),
    ("wo3", "我", "w o3"),
    ("men2", "们", "m en2"),
    ("ta1", "他", "t a1"),
    ("shi4", "是", "sh i4"),
    ("zhong1", "中", "zh ong1"),
    ("guo2", "国", "g uo2"),
    ("ren2", "人", "r en2"),
    ("xue2", "学", "x ue2"),
    ("sheng1", "生", "sh eng1"),
    ("lao3", "老", "l ao3"),
    ("shi1", "师", "sh i1"),
    ("peng2", "朋", "p eng2"),
    ("you3", "友", "y ou3"),
    ("jia1", "家", "j ia1"),
    ("da4", "大", "d a4"),
    ("xiao3", "小", "x iao3"),
    ("chi1", "吃", "ch i1"),
    ("fan4", "饭", "f an4"),
];

pub const WORDS: [&str; 30] = [
    "你", "我", "他", "是", "人", "家", "大", "小", "吃", "饭", "好", "老", "中", "学", "你好", "我们", "他们", "中国", "中国人", "学生", "老师",
    "朋友", "大家", "小学", "小学生", "吃饭", "国家", "大学", "大学生", "好人",
];

/// Written differently from 他 but pronounced the same.
pub const HOMOPHONE: (&str, &str) = ("她", "他");

const SPEAKERS: [(&str, f64); 5] = [("spk0", 0.30), ("spk1", 0.45), ("spk2", 0.60), ("spk3", 0.75), ("spk4", 0.90)];
const SYLLABLE_SECS: f64 = 0.12;
const EDGE_SECS: f64 = 0.05;
const RAMP_SECS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyUtterance {
    pub id: String,
    pub speaker: String,
    pub words: Vec<String>,
}

fn syllable_of(character: char) -> &'static str {
    let c = character.to_string();
    let c = if c == HOMOPHONE.0 { HOMOPHONE.1 } else { c.as_str() };
    SYLLABLES.iter().find(|s| s.1 == c).map(|s| s.0).expect("toy characters come from the syllable table")
}

/// Syllables of a toy word, one per character.
pub fn pronounce(word: &str) -> Vec<&'static str> {
    word.chars().map(syllable_of).collect()
}

/// Lexicon file body: `word syllable…`, optionally including the homophone.
pub fn lexicon_text(with_homophone: bool) -> String {
    let mut words: Vec<&str> = WORDS.to_vec();
    if with_homophone {
        words.push(HOMOPHONE.0);
    }
    words.iter().map(|w| format!("{w} {}\n", pronounce(w).join(" "))).collect()
}

/// Syllable table body: `syllable phoneme…`.
pub fn syllable_table_text() -> String {
    SYLLABLES.iter().map(|(s, _, p)| format!("{s} {p}\n")).collect()
}

pub fn lexicon(with_homophone: bool) -> Lexicon {
    Lexicon::parse(&lexicon_text(with_homophone), "toy lexicon", &syllable_table_text(), "toy syllables").expect("toy tables are consistent")
}

/// `n` utterances of one to three words, no two sharing a syllable
/// sequence. The first thirty each contain the correspondingly numbered
/// word, so every word and syllable occurs once `n ≥ 30`.
pub fn corpus(n: usize, seed: u64) -> Vec<ToyUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let i = out.len();
        let extra = rng.gen_range(0..=2);
        let mut words: Vec<String> = (0..extra).map(|_| WORDS.choose(&mut rng).unwrap().to_string()).collect();
        if i < WORDS.len() {
            let at = rng.gen_range(0..=words.len());
            words.insert(at, WORDS[i].to_string());
        } else if words.is_empty() {
            words.push(WORDS.choose(&mut rng).unwrap().to_string());
        }
        let syllables: Vec<&str> = words.iter().flat_map(|w| pronounce(w)).collect();
        if !seen.insert(syllables.join(" ")) {
            continue;
        }
        out.push(ToyUtterance {
            id: format!("toy{i:03}"),
            speaker: SPEAKERS[i % SPEAKERS.len()].0.to_string(),
            words,
        });
    }
    out
}

/// Copies of the utterances that contain the standalone word 他 exactly
/// once, with that word replaced by 她 and `-h` appended to the id. Their
/// audio is identical to the originals'.
pub fn homophone_twins(utterances: &[ToyUtterance]) -> Vec<ToyUtterance> {
    utterances
        .iter()
        .filter(|u| u.words.iter().filter(|w| *w == HOMOPHONE.1).count() == 1)
        .map(|u| ToyUtterance {
            id: format!("{}-h", u.id),
            speaker: u.speaker.clone(),
            words: u.words.iter().map(|w| if w == HOMOPHONE.1 { HOMOPHONE.0.to_string() } else { w.clone() }).collect(),
        })
        .collect()
}

/// Two tones per syllable: one low, one high, both fixed by the syllable's
/// position in the table.
fn tone_pair(syllable: &str) -> (f64, f64) {
    let k = SYLLABLES.iter().position(|s| s.0 == syllable).expect("known syllable") as f64;
    (250.0 + 90.0 * k, 2200.0 + 230.0 * k)
}

/// 64-bit FNV-1a, used to seed noise from content rather than ids.
fn fnv(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain([0xff]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Renders an utterance. The waveform depends only on the speaker and the
/// syllable sequence.
pub fn synthesize(utt: &ToyUtterance) -> AudioSignal {
    let syllables: Vec<&str> = utt.words.iter().flat_map(|w| pronounce(w)).collect();
    let gain = SPEAKERS.iter().find(|s| s.0 == utt.speaker).map(|s| s.1).unwrap_or(0.5);
    let mut key = vec![utt.speaker.as_str()];
    key.extend(&syllables);
    let mut rng = ChaCha8Rng::seed_from_u64(fnv(&key));
    let sr = SAMPLE_RATE as f64;
    let edge = (EDGE_SECS * sr) as usize;
    let seg = (SYLLABLE_SECS * sr) as usize;
    let ramp = (RAMP_SECS * sr) as usize;
    let mut samples = vec![0.0; 2 * edge + seg * syllables.len()];
    for (s, syl) in syllables.iter().enumerate() {
        let (f1, f2) = tone_pair(syl);
        for n in 0..seg {
            let env = if n < ramp {
                0.5 - 0.5 * (PI * n as f64 / ramp as f64).cos()
            } else if n >= seg - ramp {
                0.5 - 0.5 * (PI * (seg - n) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            let t = n as f64 / sr;
            samples[edge + s * seg + n] = gain * env * (0.6 * (2.0 * PI * f1 * t).sin() + 0.4 * (2.0 * PI * f2 * t).sin());
        }
    }
    for x in samples.iter_mut() {
        *x += rng.gen_range(-0.002..0.002);
    }
    AudioSignal::new(samples, SAMPLE_RATE).expect("toy audio is non-empty")
}

/// Files describing a corpus on disk.
#[derive(Debug, Clone)]
pub struct ToyFiles {
    pub manifest: PathBuf,
    pub lexicon: PathBuf,
    pub syllables: PathBuf,
}

/// Writes `wav/<id>.wav`, `<name>.tsv`, `lexicon.txt` and `syllables.txt`
/// under `dir`.
pub fn write_corpus(dir: &Path, name: &str, utterances: &[ToyUtterance], with_homophone: bool) -> Result<ToyFiles, FrontendError> {
    fs::create_dir_all(dir.join("wav"))?;
    let mut entries = Vec::with_capacity(utterances.len());
    for u in utterances {
        let rel = PathBuf::from("wav").join(format!("{}.wav", u.id));
        write_wav(&dir.join(&rel), &synthesize(u))?;
        entries.push(ManifestEntry {
            utterance_id: u.id.clone(),
            wav_path: rel,
            speaker_id: u.speaker.clone(),
            transcript: u.words.clone(),
        });
    }
    let files = ToyFiles {
        manifest: dir.join(format!("{name}.tsv")),
        lexicon: dir.join("lexicon.txt"),
        syllables: dir.join("syllables.txt"),
    };
    write_manifest(&files.manifest, &entries)?;
    fs::write(&files.lexicon, lexicon_text(with_homophone))?;
    fs::write(&files.syllables, syllable_table_text())?;
    Ok(files)
}
