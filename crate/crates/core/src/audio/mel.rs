use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{AudioSignal, FeatureMatrix, FrontendError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub window_ms: f64,
    pub shift_ms: f64,
    pub n_mels: usize,
    pub n_fft: usize,
    pub left_stack: usize,
    /// Output frame period is `shift_ms * downsample_factor`; 3, 5 and 7 give
    /// 30, 50 and 70 ms.
    pub downsample_factor: usize,
    pub mel_low_hz: f64,
    /// Upper filterbank edge; `None` means the Nyquist frequency.
    pub mel_high_hz: Option<f64>,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            window_ms: 25.0,
            shift_ms: 10.0,
            n_mels: 80,
            n_fft: 512,
            left_stack: 3,
            downsample_factor: 3,
            mel_low_hz: 20.0,
            mel_high_hz: None,
            log_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (self.shift_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    /// Frame period of the stacked, downsampled output.
    pub fn output_frame_ms(&self) -> f64 {
        self.shift_ms * self.downsample_factor as f64
    }

    /// Dimension of the stacked output frames.
    pub fn output_dim(&self) -> usize {
        self.n_mels * (self.left_stack + 1)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), FrontendError> {
        let w = self.window_samples(sample_rate);
        let h = self.shift_samples(sample_rate);
        let fail = |m: String| Err(FrontendError::Config(m));
        if w == 0 || h == 0 {
            return fail(format!("window {w} / shift {h} samples must be positive"));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < w {
            return fail(format!("n_fft {} must be a power of two ≥ the {w}-sample window", self.n_fft));
        }
        if self.n_mels == 0 || self.downsample_factor == 0 {
            return fail("n_mels and downsample_factor must be positive".into());
        }
        if !(self.log_floor > 0.0) {
            return fail("log_floor must be positive".into());
        }
        let high = self.mel_high_hz.unwrap_or(sample_rate as f64 / 2.0);
        if !(self.mel_low_hz >= 0.0 && self.mel_low_hz < high && high <= sample_rate as f64 / 2.0) {
            return fail(format!("mel range {}..{high} Hz is invalid", self.mel_low_hz));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale, stored sparsely as a
/// first bin and a run of weights over the `n_fft / 2 + 1` magnitude bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    edges_hz: Vec<f64>,
    filters: Vec<(usize, Vec<f64>)>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, low_hz: f64, high_hz: f64) -> Self {
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let filters = (0..n_mels)
            .map(|j| {
                let (left, center, right) = (edges_hz[j], edges_hz[j + 1], edges_hz[j + 2]);
                let mut first = None;
                let mut weights = Vec::new();
                for k in 0..n_bins {
                    let f = k as f64 * bin_hz;
                    let w = if f > left && f <= center {
                        (f - left) / (center - left)
                    } else if f > center && f < right {
                        (right - f) / (right - center)
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        first.get_or_insert(k);
                        weights.push(w);
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), weights)
            })
            .collect();
        MelFilterbank {
            edges_hz,
            filters,
            n_bins,
        }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Peak frequency of filter `j`.
    pub fn center_hz(&self, j: usize) -> f64 {
        self.edges_hz[j + 1]
    }

    /// Applies every filter to a magnitude spectrum of `n_fft / 2 + 1` bins.
    pub fn apply(&self, magnitudes: &[f64]) -> Vec<f64> {
        debug_assert_eq!(magnitudes.len(), self.n_bins);
        self.filters
            .iter()
            .map(|(first, w)| w.iter().zip(&magnitudes[*first..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Symmetric Hann window.
pub(crate) fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Log-Mel filterbank energies: Hann-windowed frames of `window_ms` every
/// `shift_ms`, FFT magnitude, triangular mel filters, natural log floored at
/// `log_floor`. Produces `floor((N − W) / H) + 1` frames of `n_mels` values.
pub fn log_mel(audio: &AudioSignal, cfg: &FrontendConfig, utterance_id: &str, speaker_id: &str) -> Result<FeatureMatrix, FrontendError> {
    let sr = audio.sample_rate;
    cfg.validate(sr)?;
    let w = cfg.window_samples(sr);
    let h = cfg.shift_samples(sr);
    let n = audio.samples.len();
    if n < w {
        return Err(FrontendError::TooShort { samples: n, window: w });
    }
    let frames = (n - w) / h + 1;
    let high = cfg.mel_high_hz.unwrap_or(sr as f64 / 2.0);
    let bank = MelFilterbank::new(cfg.n_mels, cfg.n_fft, sr, cfg.mel_low_hz, high);
    let window = hann(w);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut mags = vec![0.0; cfg.n_fft / 2 + 1];
    let mut out = Vec::with_capacity(frames * cfg.n_mels);
    for t in 0..frames {
        let frame = &audio.samples[t * h..t * h + w];
        for (b, (&s, &win)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *b = Complex::new(s * win, 0.0);
        }
        for b in &mut buf[w..] {
            *b = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for (m, b) in mags.iter_mut().zip(&buf) {
            *m = b.norm();
        }
        out.extend(bank.apply(&mags).into_iter().map(|e| e.max(cfg.log_floor).ln()));
    }
    Ok(FeatureMatrix {
        frames: Tensor::matrix(frames, cfg.n_mels, out).expect("frame count is positive"),
        frame_shift_ms: cfg.shift_ms,
        utterance_id: utterance_id.to_string(),
        speaker_id: speaker_id.to_string(),
    })
}
