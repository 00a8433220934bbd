use super::{AudioSignal, FrontendError};

/// Rescales duration by `factor`: output sample `i` is the input linearly
/// interpolated at position `i / factor`, giving `round(N · factor)` samples
/// at the original sample rate (pitch and tempo both change). Positions past
/// the last sample extend the final segment linearly.
pub fn speed_perturb(audio: &AudioSignal, factor: f64) -> Result<AudioSignal, FrontendError> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(FrontendError::Config(format!("speed factor must be positive, got {factor}")));
    }
    let x = &audio.samples;
    let n = x.len();
    let out_len = (n as f64 * factor).round() as usize;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 / factor;
            let base = (pos.floor() as usize).min(n.saturating_sub(2));
            let frac = pos - base as f64;
            if frac == 0.0 || n == 1 {
                x[base.min(n - 1)]
            } else {
                x[base] + frac * (x[base + 1] - x[base])
            }
        })
        .collect();
    Ok(AudioSignal {
        samples,
        sample_rate: audio.sample_rate,
    })
}
