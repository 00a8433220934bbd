//! Binary feature files: two little-endian `u32` (frames, dim) followed by
//! `frames · dim` little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use super::{FeatureMatrix, FrontendError};
use crate::tensor::Tensor;

pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<(), FrontendError> {
    let (t, d) = (features.num_frames(), features.dim());
    let mut bytes = Vec::with_capacity(8 + 4 * t * d);
    bytes.extend_from_slice(&(t as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in features.frames.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_features(path: &Path, utterance_id: &str, speaker_id: &str, frame_shift_ms: f64) -> Result<FeatureMatrix, FrontendError> {
    let bytes = fs::read(path)?;
    let bad = |message: String| FrontendError::Cache {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 8 {
        return Err(bad("truncated header".into()));
    }
    let t = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 4 * t * d {
        return Err(bad(format!("header says {t}x{d} but payload is {} bytes", bytes.len() - 8)));
    }
    let data = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let frames = Tensor::matrix(t, d, data).map_err(|e| bad(e.to_string()))?;
    Ok(FeatureMatrix {
        frames,
        frame_shift_ms,
        utterance_id: utterance_id.to_string(),
        speaker_id: speaker_id.to_string(),
    })
}
