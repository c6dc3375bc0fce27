//! Sine-based source excitation: a fundamental plus harmonic overtones in
//! voiced regions, Gaussian noise in unvoiced regions, and a trainable
//! mix of the harmonic components.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Excitation generator settings.
#[derive(Clone, Copy, Debug)]
pub struct SourceConfig {
    /// Amplitude of each voiced sine component.
    pub alpha: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub sigma: f64,
    /// Number of overtones above the fundamental.
    pub harmonics: usize,
    pub sample_rate: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            alpha: 0.1,
            sigma: 0.003,
            harmonics: 7,
            sample_rate: 16000.0,
        }
    }
}

/// One sine excitation at `multiple` times the fundamental. `f0` is the
/// per-sample fundamental in Hz (0 = unvoiced). The random phase offset
/// `phase` is fixed for the whole track; pass `rng: None` for the
/// noise-free deterministic signal used at validation time.
///
/// Voiced samples are `alpha * sin(accumulated phase) + n`, unvoiced
/// samples are `alpha / (3 sigma) * n`, with `n ~ N(0, sigma^2)`.
pub fn harmonic_component<S: Scalar, R: Rng>(
    f0: &[f32],
    multiple: usize,
    phase: f64,
    cfg: &SourceConfig,
    rng: Option<&mut R>,
) -> Result<Vec<S>> {
    let nyquist = cfg.sample_rate / 2.0;
    let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng;
    let mut acc = phase;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut out = Vec::with_capacity(f0.len());
    for (t, &f) in f0.iter().enumerate() {
        let f = f as f64 * multiple as f64;
        if f >= nyquist {
            return Err(Error::Aliasing {
                f0: f,
                nyquist,
                index: t,
            });
        }
        let n = match rng.as_mut() {
            Some(r) => normal.sample(r),
            None => 0.0,
        };
        let v = if f > 0.0 {
            acc = (acc + two_pi * f / cfg.sample_rate) % two_pi;
            cfg.alpha * acc.sin() + n
        } else {
            cfg.alpha / (3.0 * cfg.sigma) * n
        };
        out.push(S::from_double(v));
    }
    Ok(out)
}

/// The fundamental plus all overtone components, each with its own random
/// initial phase drawn from `rng` (or zero phases when `rng` is `None`).
pub fn harmonic_stack<S: Scalar, R: Rng>(
    f0: &[f32],
    cfg: &SourceConfig,
    mut rng: Option<&mut R>,
) -> Result<Vec<Vec<S>>> {
    let mut comps = Vec::with_capacity(cfg.harmonics + 1);
    for h in 0..=cfg.harmonics {
        let phase = match rng.as_mut() {
            Some(r) => r.gen_range(0.0..2.0 * std::f64::consts::PI),
            None => 0.0,
        };
        comps.push(harmonic_component(f0, h + 1, phase, cfg, rng.as_deref_mut())?);
    }
    Ok(comps)
}

/// Gaussian noise excitation for the noise branch, std `alpha / 3`.
pub fn noise_excitation<S: Scalar, R: Rng>(
    len: usize,
    cfg: &SourceConfig,
    rng: Option<&mut R>,
) -> Vec<S> {
    match rng {
        Some(r) => {
            let normal = Normal::new(0.0, cfg.alpha / 3.0).unwrap();
            (0..len).map(|_| S::from_double(normal.sample(r))).collect()
        }
        None => vec![S::zero(); len],
    }
}
