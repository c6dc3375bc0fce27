//! Deterministic signal primitives: framing, Hann windowing, DFT and
//! unnormalized inverse DFT, and replication upsampling.
//!
//! Conventions: frame `n` (0-based) covers source samples
//! `n*shift .. n*shift + M` with tail zero-padding, the DFT is the plain
//! forward transform `X_k = sum_m x_m e^{-j 2 pi k m / K}`, and the inverse
//! is unnormalized so `idft(dft(x)) = K * x`.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_complex::Complex;
use rustfft::FftPlanner;

/// Mono sampled signal.
#[derive(Clone, Debug)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample_rate must be > 0".into()));
        }
        if samples.is_empty() {
            return Err(Error::Config("waveform must have length >= 1".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One short-time analysis configuration (Hann window throughout).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub dft_bins: usize,
    pub frame_length: usize,
    pub frame_shift: usize,
}

impl StftConfig {
    pub fn new(dft_bins: usize, frame_length: usize, frame_shift: usize) -> Result<Self> {
        let cfg = StftConfig {
            dft_bins,
            frame_length,
            frame_shift,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dft_bins.is_power_of_two() {
            return Err(Error::Config(format!(
                "dft_bins {} is not a power of two",
                self.dft_bins
            )));
        }
        if self.dft_bins < self.frame_length {
            return Err(Error::Config(format!(
                "dft_bins {} < frame_length {}",
                self.dft_bins, self.frame_length
            )));
        }
        if self.frame_shift == 0 || self.frame_shift > self.frame_length {
            return Err(Error::Config(format!(
                "frame_shift {} outside (0, frame_length {}]",
                self.frame_shift, self.frame_length
            )));
        }
        if self.frame_length < 2 {
            return Err(Error::Config("frame_length must be >= 2".into()));
        }
        Ok(())
    }
}

/// Windowed frames: `num_frames x frame_length`, row-major.
#[derive(Clone, Debug)]
pub struct FrameMatrix<S> {
    pub num_frames: usize,
    pub frame_length: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> FrameMatrix<S> {
    pub fn frame(&self, n: usize) -> &[S] {
        &self.data[n * self.frame_length..(n + 1) * self.frame_length]
    }
}

/// Symmetric Hann window, `w_m = 0.5 * (1 - cos(2 pi m / (M - 1)))`.
pub fn hann_window<S: Scalar>(m: usize) -> Vec<S> {
    assert!(m >= 2);
    let denom = (m - 1) as f64;
    (0..m)
        .map(|i| S::from_double(0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / denom).cos())))
        .collect()
}

/// Number of frames: `floor(max(T - M, 0) / shift) + 1`.
pub fn num_frames(t: usize, frame_length: usize, frame_shift: usize) -> usize {
    t.saturating_sub(frame_length) / frame_shift + 1
}

/// Slice a signal into Hann-windowed frames; frames that run past the end
/// of the signal are zero-padded.
pub fn frame_and_window<S: Scalar>(samples: &[S], cfg: &StftConfig) -> Result<FrameMatrix<S>> {
    cfg.validate()?;
    let m = cfg.frame_length;
    let n = num_frames(samples.len(), m, cfg.frame_shift);
    let window = hann_window::<S>(m);
    let mut data = vec![S::zero(); n * m];
    for fr in 0..n {
        let start = fr * cfg.frame_shift;
        let row = &mut data[fr * m..(fr + 1) * m];
        for (i, w) in window.iter().enumerate() {
            if start + i < samples.len() {
                row[i] = samples[start + i] * *w;
            }
        }
    }
    Ok(FrameMatrix {
        num_frames: n,
        frame_length: m,
        data,
    })
}

/// K-point DFT of a real frame (zero-padded to K).
pub fn dft<S: Scalar>(frame: &[S], dft_bins: usize) -> Result<Vec<Complex<S>>> {
    if !dft_bins.is_power_of_two() || dft_bins < frame.len() {
        return Err(Error::Config(format!(
            "dft_bins {} must be a power of two >= frame length {}",
            dft_bins,
            frame.len()
        )));
    }
    let mut buf: Vec<Complex<S>> = frame
        .iter()
        .map(|&x| Complex::new(x, S::zero()))
        .chain(std::iter::repeat(Complex::new(S::zero(), S::zero())))
        .take(dft_bins)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(dft_bins).process(&mut buf);
    Ok(buf)
}

/// Max absolute violation of conjugate symmetry, relative to the largest
/// magnitude in the spectrum.
pub fn conjugate_symmetry_error<S: Scalar>(spec: &[Complex<S>]) -> S {
    let k = spec.len();
    let scale = spec
        .iter()
        .map(|c| c.norm_sqr())
        .fold(S::zero(), S::max)
        .sqrt()
        .max(S::from_double(1e-30));
    let mut worst = spec[0].im.abs();
    if k % 2 == 0 {
        worst = worst.max(spec[k / 2].im.abs());
    }
    for i in 1..k / 2 {
        let a = spec[i];
        let b = spec[k - i];
        worst = worst.max((a.re - b.re).abs()).max((a.im + b.im).abs());
    }
    worst / scale
}

/// Unnormalized inverse DFT of a conjugate-symmetric spectrum. Returns the
/// real signal; fails if the input is not conjugate-symmetric or the
/// imaginary residue of the output is abnormally large.
pub fn idft<S: Scalar>(spec: &[Complex<S>]) -> Result<Vec<S>> {
    let k = spec.len();
    if !k.is_power_of_two() {
        return Err(Error::Config(format!("idft length {} not a power of two", k)));
    }
    let sym_err = conjugate_symmetry_error(spec);
    if sym_err > S::sym_tol() {
        return Err(Error::NotConjugateSymmetric(format!(
            "relative violation {}",
            sym_err
        )));
    }
    let mut buf = spec.to_vec();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(k).process(&mut buf);
    let norm: S = buf.iter().map(|c| c.norm_sqr()).sum::<S>().sqrt();
    let residue: S = buf.iter().map(|c| c.im * c.im).sum::<S>().sqrt();
    let tol = if S::DOUBLE {
        S::from_double(1e-10)
    } else {
        S::sym_tol()
    };
    if norm > S::zero() && residue / norm > tol {
        return Err(Error::NotConjugateSymmetric(format!(
            "imaginary residue {} of output norm",
            (residue / norm)
        )));
    }
    Ok(buf.into_iter().map(|c| c.re).collect())
}

/// Repeat each frame-rate row `factor` times: `B x D -> (B * factor) x D`.
pub fn upsample_replicate<S: Scalar>(frames: &Array<S>, factor: usize) -> Array<S> {
    assert!(factor >= 1);
    let mut out = Array::zeros(frames.rows() * factor, frames.cols());
    for b in 0..frames.rows() {
        for r in 0..factor {
            out.row_mut(b * factor + r).copy_from_slice(frames.row(b));
        }
    }
    out
}

/// Replicate a frame-rate scalar sequence to sample rate.
pub fn upsample_scalar<S: Copy>(values: &[S], factor: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(values.len() * factor);
    for &v in values {
        out.extend(std::iter::repeat(v).take(factor));
    }
    out
}
