//! Log mel-spectrogram extraction: 320-sample Hann frames at an 80-sample
//! hop, a 512-point DFT, and 80 triangular bands from 0 Hz to Nyquist with
//! amplitudes floored at log(1e-5).

use crate::array::Array;
use crate::dsp::{self, StftConfig, Waveform};
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct MelConfig {
    pub stft: StftConfig,
    pub bands: usize,
    pub floor: f32,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            stft: StftConfig {
                dft_bins: 512,
                frame_length: 320,
                frame_shift: 80,
            },
            bands: 80,
            floor: 1e-5,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filterbank over DFT bins 0..K/2 with band centres uniformly
/// spaced on the mel scale between 0 Hz and Nyquist.
pub fn mel_filterbank(cfg: &MelConfig, sample_rate: f64) -> Vec<Vec<(usize, f64)>> {
    let k_half = cfg.stft.dft_bins / 2;
    let nyquist = sample_rate / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..cfg.bands + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate / cfg.stft.dft_bins as f64;
    (0..cfg.bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let mut taps = Vec::new();
            for k in 0..=k_half {
                let f = k as f64 * bin_hz;
                let w = if f <= lo || f >= hi {
                    0.0
                } else if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                };
                if w > 0.0 {
                    taps.push((k, w));
                }
            }
            taps
        })
        .collect()
}

/// Frame-rate log mel amplitudes, `num_frames x bands`.
pub fn extract_mel_spectrogram(wave: &Waveform, cfg: &MelConfig) -> Result<Array<f32>> {
    cfg.stft.validate()?;
    let frames = dsp::frame_and_window::<f64>(
        &wave.samples.iter().map(|&s| s as f64).collect::<Vec<_>>(),
        &cfg.stft,
    )?;
    let bank = mel_filterbank(cfg, wave.sample_rate as f64);
    let n = frames.num_frames;
    let mut out = Array::zeros(n, cfg.bands);
    for fi in 0..n {
        let frame = &frames.data[fi * cfg.stft.frame_length..(fi + 1) * cfg.stft.frame_length];
        let spec = dsp::dft(frame, cfg.stft.dft_bins)?;
        for (b, taps) in bank.iter().enumerate() {
            let mut amp = 0.0f64;
            for &(k, w) in taps {
                amp += w * spec[k].norm();
            }
            out.set(fi, b, (amp.max(cfg.floor as f64)).ln() as f32);
        }
    }
    Ok(out)
}
