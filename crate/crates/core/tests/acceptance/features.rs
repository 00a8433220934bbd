use std::f64::consts::PI;

use cascade_asr::audio::{cmvn_by_speaker, log_mel, speed_perturb, stack_and_downsample, AudioSignal, FeatureMatrix, FrontendConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{verdict, Check};

fn tone(seconds: f64, hz: f64, seed: u64) -> AudioSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * 16000.0) as usize;
    let samples = (0..n).map(|i| 0.3 * (2.0 * PI * hz * i as f64 / 16000.0).sin() + rng.gen_range(-0.01..0.01)).collect();
    AudioSignal::new(samples, 16000).unwrap()
}

/// Largest deviation of any speaker's pooled per-dimension mean from 0 and
/// standard deviation from 1.
fn cmvn_deviation(feats: &[FeatureMatrix]) -> f64 {
    let mut worst = 0.0f64;
    let speakers: std::collections::BTreeSet<&str> = feats.iter().map(|f| f.speaker_id.as_str()).collect();
    for spk in speakers {
        let rows: Vec<&[f64]> = feats.iter().filter(|f| f.speaker_id == spk).flat_map(|f| f.frames.data().chunks(f.dim())).collect();
        let n = rows.len() as f64;
        for d in 0..rows[0].len() {
            let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            worst = worst.max(mean.abs()).max((var.sqrt() - 1.0).abs());
        }
    }
    worst
}

pub fn check() -> Check {
    let cfg = FrontendConfig::default();
    let one_second = tone(1.0, 440.0, 1);
    let f = log_mel(&one_second, &cfg, "u0", "a").map_err(|e| e.to_string())?;
    let raw_shape = f.frames.shape().to_vec();

    let mut pool = vec![f];
    for (i, (secs, hz, spk)) in [(0.7, 900.0, "a"), (1.3, 300.0, "b"), (0.5, 1500.0, "b"), (0.9, 2500.0, "b")].into_iter().enumerate() {
        pool.push(log_mel(&tone(secs, hz, 10 + i as u64), &cfg, &format!("u{}", i + 1), spk).map_err(|e| e.to_string())?);
    }
    let normalized = cmvn_by_speaker(&pool);
    let deviation = cmvn_deviation(&normalized);
    let stacked = stack_and_downsample(&normalized[0], cfg.left_stack, cfg.downsample_factor);
    let stacked_shape = stacked.frames.shape().to_vec();

    let identical = speed_perturb(&one_second, 1.0).map_err(|e| e.to_string())? == one_second;

    let mut rates = Vec::new();
    let mut rates_ok = true;
    for factor in [3usize, 5, 7] {
        let c = FrontendConfig {
            downsample_factor: factor,
            ..FrontendConfig::default()
        };
        let out = stack_and_downsample(&normalized[0], c.left_stack, c.downsample_factor);
        let frames = out.num_frames();
        rates_ok &= out.frame_shift_ms == 10.0 * factor as f64 && c.output_frame_ms() == out.frame_shift_ms && frames == 98usize.div_ceil(factor);
        rates.push(format!("{} ms/{frames} frames", out.frame_shift_ms));
    }

    verdict(
        raw_shape == [98, 80] && stacked_shape == [33, 320] && deviation <= 1e-6 && identical && rates_ok,
        format!(
            "{}x{} -> {}x{}, CMVN deviation {deviation:.1e}, factor 1.0 identical: {identical}, factors 3/5/7 give {}",
            raw_shape[0],
            raw_shape[1],
            stacked_shape[0],
            stacked_shape[1],
            rates.join(", ")
        ),
    )
}
