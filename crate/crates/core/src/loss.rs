//! Log spectral amplitude distance, its analytic backward pass, and the
//! multi-resolution merge. Also the waveform MSE kept as an ablation
//! baseline.
//!
//! The backward pass builds a conjugate-symmetric gradient spectrum per
//! frame, takes its unnormalized inverse DFT, drops the zero-padded tail,
//! re-applies the Hann window (the window is part of the framing linear
//! map), and scatter-adds overlapping frames into the waveform gradient.

use crate::dsp::{self, StftConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_complex::Complex;
use rustfft::FftPlanner;

pub const DEFAULT_ETA: f64 = 1e-5;

/// Multi-resolution loss: a list of short-time configurations plus the
/// stability constant eta.
#[derive(Clone, Debug)]
pub struct MultiResLossConfig {
    pub configs: Vec<StftConfig>,
    pub eta: f64,
}

impl MultiResLossConfig {
    pub fn new(configs: Vec<StftConfig>, eta: f64) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::Config("loss config list is empty".into()));
        }
        if eta <= 0.0 {
            return Err(Error::Config("eta must be > 0".into()));
        }
        for c in &configs {
            c.validate()?;
        }
        Ok(MultiResLossConfig { configs, eta })
    }

    /// The three configurations used for full-size training:
    /// (512, 320, 80), (128, 80, 40), (2048, 1920, 640).
    pub fn default_triples() -> Self {
        MultiResLossConfig {
            configs: vec![
                StftConfig::new(512, 320, 80).unwrap(),
                StftConfig::new(128, 80, 40).unwrap(),
                StftConfig::new(2048, 1920, 640).unwrap(),
            ],
            eta: DEFAULT_ETA,
        }
    }
}

fn check_lengths<S>(generated: &[S], natural: &[S]) -> Result<()> {
    if generated.len() != natural.len() {
        return Err(Error::LengthMismatch(format!(
            "generated {} vs natural {}",
            generated.len(),
            natural.len()
        )));
    }
    Ok(())
}

/// Log spectral amplitude distance for one configuration:
/// `L = 1/(2NK) sum_n sum_k [log((|y|^2 + eta) / (|y_hat|^2 + eta))]^2`.
pub fn spectral_distance<S: Scalar>(
    generated: &[S],
    natural: &[S],
    cfg: &StftConfig,
    eta: f64,
) -> Result<S> {
    check_lengths(generated, natural)?;
    let gen_frames = dsp::frame_and_window(generated, cfg)?;
    let nat_frames = dsp::frame_and_window(natural, cfg)?;
    let k = cfg.dft_bins;
    let n = gen_frames.num_frames;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(k);
    let mut acc = 0.0f64;
    let mut gen_buf = vec![Complex::new(S::zero(), S::zero()); k];
    let mut nat_buf = vec![Complex::new(S::zero(), S::zero()); k];
    for fr in 0..n {
        load_frame(&mut gen_buf, gen_frames.frame(fr));
        load_frame(&mut nat_buf, nat_frames.frame(fr));
        fft.process(&mut gen_buf);
        fft.process(&mut nat_buf);
        for bin in 0..k {
            let num = nat_buf[bin].norm_sqr().to_double() + eta;
            let den = gen_buf[bin].norm_sqr().to_double() + eta;
            let d = (num / den).ln();
            acc += d * d;
        }
    }
    Ok(S::from_double(acc / (2.0 * n as f64 * k as f64)))
}

fn load_frame<S: Scalar>(buf: &mut [Complex<S>], frame: &[S]) {
    for (dst, &src) in buf.iter_mut().zip(frame.iter()) {
        *dst = Complex::new(src, S::zero());
    }
    for dst in buf.iter_mut().skip(frame.len()) {
        *dst = Complex::new(S::zero(), S::zero());
    }
}

/// Per-frame gradient spectrum `g_k = dL/dRe(y_hat_k) + j dL/dIm(y_hat_k)`
/// for the log spectral amplitude distance. Conjugate symmetry holds
/// exactly by construction: the upper half mirrors the lower half.
pub fn gradient_spectrum<S: Scalar>(
    gen_spec: &[Complex<S>],
    nat_spec: &[Complex<S>],
    eta: f64,
    num_frames: usize,
) -> Vec<Complex<S>> {
    let k = gen_spec.len();
    let nk = num_frames as f64 * k as f64;
    let mut g = vec![Complex::new(S::zero(), S::zero()); k];
    for bin in 0..=k / 2 {
        let num = nat_spec[bin].norm_sqr().to_double() + eta;
        let den = gen_spec[bin].norm_sqr().to_double() + eta;
        // dL/d|y_hat|^2 = -log(num/den) / (NK * den); g = 2 * that * y_hat
        let c = -2.0 * (num / den).ln() / (nk * den);
        let c = S::from_double(c);
        let re = c * gen_spec[bin].re;
        let im = if bin == 0 || bin == k / 2 {
            S::zero()
        } else {
            c * gen_spec[bin].im
        };
        g[bin] = Complex::new(re, im);
        if bin != 0 && bin != k / 2 {
            g[k - bin] = Complex::new(re, -im);
        }
    }
    g
}

/// Analytic gradient of `spectral_distance` w.r.t. the generated waveform.
pub fn spectral_distance_backward<S: Scalar>(
    generated: &[S],
    natural: &[S],
    cfg: &StftConfig,
    eta: f64,
) -> Result<Vec<S>> {
    check_lengths(generated, natural)?;
    let gen_frames = dsp::frame_and_window(generated, cfg)?;
    let nat_frames = dsp::frame_and_window(natural, cfg)?;
    let k = cfg.dft_bins;
    let m = cfg.frame_length;
    let n = gen_frames.num_frames;
    let window = dsp::hann_window::<S>(m);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(k);
    let ifft = planner.plan_fft_inverse(k);
    let mut grad = vec![S::zero(); generated.len()];
    let mut gen_buf = vec![Complex::new(S::zero(), S::zero()); k];
    let mut nat_buf = vec![Complex::new(S::zero(), S::zero()); k];
    for fr in 0..n {
        load_frame(&mut gen_buf, gen_frames.frame(fr));
        load_frame(&mut nat_buf, nat_frames.frame(fr));
        fft.process(&mut gen_buf);
        fft.process(&mut nat_buf);
        let mut g = gradient_spectrum(&gen_buf, &nat_buf, eta, n);
        // unnormalized inverse DFT; entries m+1..K belong to the
        // zero-padded part and are discarded
        ifft.process(&mut g);
        let start = fr * cfg.frame_shift;
        for i in 0..m {
            if start + i < grad.len() {
                grad[start + i] += g[i].re * window[i];
            }
        }
    }
    Ok(grad)
}

/// Merged multi-resolution loss and gradient: sums over configurations.
pub fn multi_res_loss<S: Scalar>(
    generated: &[S],
    natural: &[S],
    mcfg: &MultiResLossConfig,
) -> Result<(S, Vec<S>)> {
    check_lengths(generated, natural)?;
    let mut total = S::zero();
    let mut grad = vec![S::zero(); generated.len()];
    for cfg in &mcfg.configs {
        total += spectral_distance(generated, natural, cfg, mcfg.eta)?;
        let g = spectral_distance_backward(generated, natural, cfg, mcfg.eta)?;
        for (acc, v) in grad.iter_mut().zip(g.iter()) {
            *acc += *v;
        }
    }
    Ok((total, grad))
}

/// Forward-only multi-resolution loss.
pub fn multi_res_loss_value<S: Scalar>(
    generated: &[S],
    natural: &[S],
    mcfg: &MultiResLossConfig,
) -> Result<S> {
    let mut total = S::zero();
    for cfg in &mcfg.configs {
        total += spectral_distance(generated, natural, cfg, mcfg.eta)?;
    }
    Ok(total)
}

/// Mean square error over the waveform.
pub fn waveform_mse<S: Scalar>(generated: &[S], natural: &[S]) -> Result<S> {
    check_lengths(generated, natural)?;
    let t = generated.len();
    let mut acc = S::zero();
    for (a, b) in generated.iter().zip(natural.iter()) {
        let d = *a - *b;
        acc += d * d;
    }
    Ok(acc / S::from_count(t))
}
