use std::collections::BTreeMap;

use crate::tensor::Tensor;

/// Per-utterance acoustic features, `frames × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: Tensor,
    pub frame_shift_ms: f64,
    pub utterance_id: String,
    pub speaker_id: String,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

/// Variance below which a dimension is only mean-subtracted.
const MIN_VARIANCE: f64 = 1e-10;

/// Mean and variance normalization with statistics pooled over all frames of
/// each speaker. Every utterance of a speaker must be in `features`.
pub fn cmvn_by_speaker(features: &[FeatureMatrix]) -> Vec<FeatureMatrix> {
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in features.iter().enumerate() {
        by_speaker.entry(f.speaker_id.as_str()).or_default().push(i);
    }
    let mut out = features.to_vec();
    for indices in by_speaker.values() {
        let d = features[indices[0]].dim();
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        for &i in indices {
            assert_eq!(features[i].dim(), d, "utterances of one speaker must share the feature dimension");
            for row in features[i].frames.data().chunks(d) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
                count += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; d];
        for &i in indices {
            for row in features[i].frames.data().chunks(d) {
                for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let v = v / count as f64;
                if v < MIN_VARIANCE {
                    1.0
                } else {
                    1.0 / v.sqrt()
                }
            })
            .collect();
        for &i in indices {
            for row in out[i].frames.data_mut().chunks_mut(d) {
                for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
                    *v = (*v - m) * s;
                }
            }
        }
    }
    out
}

/// Output frame `t'` concatenates input frames `t − left ..= t` (oldest
/// first) at `t = t' · factor`, replicating frame 0 where `t − k < 0`.
/// Produces `ceil(T / factor)` frames of `dim · (left + 1)` values.
pub fn stack_and_downsample(features: &FeatureMatrix, left: usize, factor: usize) -> FeatureMatrix {
    assert!(factor >= 1, "downsample factor must be at least 1");
    let t_in = features.num_frames();
    let d = features.dim();
    let t_out = t_in.div_ceil(factor);
    let width = d * (left + 1);
    let mut data = Vec::with_capacity(t_out * width);
    for tp in 0..t_out {
        let t = tp * factor;
        for k in (0..=left).rev() {
            let src = t.saturating_sub(k);
            data.extend_from_slice(features.frames.row(src));
        }
    }
    FeatureMatrix {
        frames: Tensor::matrix(t_out, width, data).expect("at least one output frame"),
        frame_shift_ms: features.frame_shift_ms * factor as f64,
        utterance_id: features.utterance_id.clone(),
        speaker_id: features.speaker_id.clone(),
    }
}
