//! Frame-level fundamental-frequency estimation by normalized
//! autocorrelation with parabolic peak interpolation.

use crate::dsp::Waveform;

/// Pitch tracker settings.
#[derive(Clone, Copy, Debug)]
pub struct PitchConfig {
    /// Analysis frame length in samples.
    pub frame_length: usize,
    /// Hop between frames in samples.
    pub frame_shift: usize,
    pub min_f0: f64,
    pub max_f0: f64,
    /// Normalized autocorrelation threshold for a voiced decision.
    pub voicing_threshold: f64,
    /// Frame energy below this fraction of the utterance peak is silence.
    pub silence_ratio: f64,
}

impl PitchConfig {
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let sr = sample_rate as usize;
        PitchConfig {
            frame_length: sr * 40 / 1000, // 40 ms window
            frame_shift: sr * 5 / 1000,   // 5 ms hop
            min_f0: 50.0,
            max_f0: 500.0,
            voicing_threshold: 0.3,
            silence_ratio: 0.01,
        }
    }
}

/// Per-frame F0 in Hz, 0 for unvoiced frames. Frame `n` is centred on
/// sample `n * frame_shift`; the track has `ceil(T / shift)` entries so it
/// aligns one-to-one with other frame-rate features.
pub fn estimate_f0(wave: &Waveform, cfg: &PitchConfig) -> Vec<f32> {
    let x = &wave.samples;
    let t = x.len();
    if t == 0 {
        return Vec::new();
    }
    let sr = wave.sample_rate as f64;
    let num_frames = t.div_ceil(cfg.frame_shift);
    let lag_min = (sr / cfg.max_f0).floor().max(2.0) as usize;
    let lag_max = (sr / cfg.min_f0).ceil() as usize;
    let win = cfg.frame_length;
    let peak_energy = frame_energies(x, cfg, num_frames)
        .into_iter()
        .fold(0.0f64, f64::max);
    let silence_gate = peak_energy * cfg.silence_ratio * cfg.silence_ratio;

    (0..num_frames)
        .map(|n| {
            let centre = n * cfg.frame_shift;
            let start = centre.saturating_sub(win / 2);
            let end = (start + win).min(t);
            let frame = &x[start..end];
            if frame.len() < lag_max + lag_min {
                return 0.0f32;
            }
            let mean = frame.iter().map(|&v| v as f64).sum::<f64>() / frame.len() as f64;
            let f: Vec<f64> = frame.iter().map(|&v| v as f64 - mean).collect();
            let energy = f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64;
            if energy <= silence_gate || energy == 0.0 {
                return 0.0;
            }
            // normalized autocorrelation over the lag range
            let r0: f64 = f.iter().map(|v| v * v).sum();
            let lag_cap = lag_max.min(f.len() - 1);
            let mut best_lag = 0usize;
            let mut best = cfg.voicing_threshold;
            let mut r_at = vec![0.0f64; lag_max + 2];
            for lag in lag_min..=lag_cap {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..f.len() - lag {
                    num += f[i] * f[i + lag];
                    den += f[i + lag] * f[i + lag];
                }
                let r = num / (r0.sqrt() * den.sqrt()).max(1e-12);
                r_at[lag] = r;
                if r > best {
                    best = r;
                    best_lag = lag;
                }
            }
            if best_lag == 0 {
                return 0.0;
            }
            // Octave-error guard: any lag multiple of the true period scores
            // near the maximum, so prefer the shortest local peak that comes
            // within a small margin of the global best.
            let margin = 0.03;
            for lag in lag_min..=lag_cap {
                let up = if lag + 1 <= lag_cap { r_at[lag + 1] } else { r_at[lag] };
                if r_at[lag] >= best - margin && r_at[lag] >= r_at[lag - 1] && r_at[lag] >= up {
                    best_lag = lag;
                    break;
                }
            }
            // parabolic interpolation around the peak lag
            let lag = if best_lag > lag_min && best_lag < lag_max.min(f.len() - 2) {
                let (a, b, c) = (r_at[best_lag - 1], r_at[best_lag], r_at[best_lag + 1]);
                let denom = a - 2.0 * b + c;
                if denom.abs() > 1e-12 {
                    best_lag as f64 + 0.5 * (a - c) / denom
                } else {
                    best_lag as f64
                }
            } else {
                best_lag as f64
            };
            (sr / lag) as f32
        })
        .collect()
}

fn frame_energies(x: &[f32], cfg: &PitchConfig, num_frames: usize) -> Vec<f64> {
    (0..num_frames)
        .map(|n| {
            let centre = n * cfg.frame_shift;
            let start = centre.saturating_sub(cfg.frame_length / 2);
            let end = (start + cfg.frame_length).min(x.len());
            let frame = &x[start..end];
            if frame.is_empty() {
                return 0.0;
            }
            let mean = frame.iter().map(|&v| v as f64).sum::<f64>() / frame.len() as f64;
            frame
                .iter()
                .map(|&v| (v as f64 - mean) * (v as f64 - mean))
                .sum::<f64>()
                / frame.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, secs: f64, sr: u32) -> Waveform {
        let n = (secs * sr as f64) as usize;
        Waveform {
            samples: (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
                .collect(),
            sample_rate: sr,
        }
    }

    #[test]
    fn pure_sine_within_one_hz() {
        let wave = sine(200.0, 1.0, 16000);
        let cfg = PitchConfig::for_sample_rate(16000);
        let f0 = estimate_f0(&wave, &cfg);
        // skip edge frames where the window is truncated
        let interior = &f0[10..f0.len() - 10];
        for &f in interior {
            assert!(f > 0.0, "interior frame unvoiced");
            assert!((f - 200.0).abs() < 1.0, "estimate {f}");
        }
    }

    #[test]
    fn low_and_high_pitches_tracked() {
        for target in [80.0, 120.0, 350.0] {
            let wave = sine(target, 0.5, 16000);
            let cfg = PitchConfig::for_sample_rate(16000);
            let f0 = estimate_f0(&wave, &cfg);
            let interior = &f0[10..f0.len() - 10];
            for &f in interior {
                assert!((f as f64 - target).abs() < 2.0, "{f} vs {target}");
            }
        }
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let wave = Waveform {
            samples: (0..16000).map(|_| rng.gen_range(-0.5f32..0.5)).collect(),
            sample_rate: 16000,
        };
        let cfg = PitchConfig::for_sample_rate(16000);
        let f0 = estimate_f0(&wave, &cfg);
        let unvoiced = f0.iter().filter(|&&f| f == 0.0).count();
        assert!(
            unvoiced as f64 >= 0.9 * f0.len() as f64,
            "{unvoiced}/{}",
            f0.len()
        );
    }

    #[test]
    fn silence_is_all_unvoiced() {
        let wave = Waveform {
            samples: vec![0.0; 8000],
            sample_rate: 16000,
        };
        let cfg = PitchConfig::for_sample_rate(16000);
        let f0 = estimate_f0(&wave, &cfg);
        assert!(f0.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn frame_count_matches_hop() {
        let wave = sine(100.0, 0.1, 16000); // 1600 samples, hop 80
        let cfg = PitchConfig::for_sample_rate(16000);
        assert_eq!(estimate_f0(&wave, &cfg).len(), 20);
    }
}

/// Pearson correlation between two equal-length tracks.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let denom = (va * vb).sqrt();
    if denom == 0.0 {
        // constant tracks: treat exact agreement as perfect correlation
        let agree = a.iter().zip(b.iter()).all(|(x, y)| x == y);
        return if agree { 1.0 } else { 0.0 };
    }
    cov / denom
}
