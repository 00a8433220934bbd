//! Dataset manifests: one utterance per line, tab-separated
//! `utterance_id  wav_path  speaker_id  transcript`, where the transcript is
//! space-separated words. Blank lines and lines starting with `#` are
//! skipped. Relative WAV paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub wav_path: PathBuf,
    pub speaker_id: String,
    pub transcript: Vec<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, FrontendError> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(FrontendError::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let wav = Path::new(fields[1]);
        out.push(ManifestEntry {
            utterance_id: fields[0].to_string(),
            wav_path: if wav.is_absolute() { wav.to_path_buf() } else { base.join(wav) },
            speaker_id: fields[2].to_string(),
            transcript: fields[3].split_whitespace().map(str::to_string).collect(),
        });
    }
    Ok(out)
}

/// Writes entries with WAV paths exactly as stored.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), FrontendError> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.utterance_id,
            e.wav_path.display(),
            e.speaker_id,
            e.transcript.join(" ")
        ));
    }
    fs::write(path, text)?;
    Ok(())
}
