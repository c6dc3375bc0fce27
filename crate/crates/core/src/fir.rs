//! Equiripple FIR design via the Parks-McClellan (Remez exchange)
//! algorithm, filter application with group-delay compensation, and the
//! voiced/unvoiced harmonic-plus-noise merge.
//!
//! Only linear-phase type-I designs (odd tap count, even symmetry) are
//! produced; lowpass and highpass both reduce to this case.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_TAPS: usize = 65; // order bound 64
const GRID_DENSITY: usize = 16;
const VERIFY_GRID: usize = 4096;

/// Band-edge specification of one filter.
#[derive(Clone, Copy, Debug)]
pub struct FirSpec {
    /// Passband in Hz (low, high).
    pub passband: (f64, f64),
    /// Stopband in Hz (low, high).
    pub stopband: (f64, f64),
    /// Maximum passband deviation in dB.
    pub max_passband_ripple_db: f64,
    /// Minimum stopband attenuation in dB (positive number).
    pub min_stopband_atten_db: f64,
    pub sample_rate: f64,
}

impl FirSpec {
    pub fn validate(&self) -> Result<()> {
        let nyq = self.sample_rate / 2.0;
        let bands = [self.passband, self.stopband];
        for (lo, hi) in bands {
            if !(0.0..=nyq).contains(&lo) || !(0.0..=nyq).contains(&hi) || lo >= hi {
                return Err(Error::Config(format!(
                    "band ({lo}, {hi}) outside [0, {nyq}]"
                )));
            }
        }
        let disjoint = self.passband.1 <= self.stopband.0 || self.stopband.1 <= self.passband.0;
        if !disjoint {
            return Err(Error::Config("passband and stopband overlap".into()));
        }
        Ok(())
    }

    fn is_lowpass(&self) -> bool {
        self.passband.0 < self.stopband.0
    }
}

/// Designed filter taps (symmetric, linear phase).
#[derive(Clone, Debug)]
pub struct FirCoefficients {
    pub taps: Vec<f64>,
}

impl FirCoefficients {
    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }
}

/// The four fixed filters of the harmonic-plus-noise merge.
#[derive(Clone, Debug)]
pub struct FirBank {
    pub lp_voiced: FirCoefficients,
    pub hp_voiced: FirCoefficients,
    pub lp_unvoiced: FirCoefficients,
    pub hp_unvoiced: FirCoefficients,
}

impl FirBank {
    pub fn filters(&self) -> [(&'static str, &FirCoefficients); 4] {
        [
            ("lp_voiced", &self.lp_voiced),
            ("hp_voiced", &self.hp_voiced),
            ("lp_unvoiced", &self.lp_unvoiced),
            ("hp_unvoiced", &self.hp_unvoiced),
        ]
    }
}

/// Default specs: voiced LP 0-5 kHz pass / 7-8 kHz stop, voiced HP the
/// mirror, unvoiced LP 0-1 kHz pass / 3-8 kHz stop, unvoiced HP the mirror.
/// 5 dB passband ripple, 40 dB stopband attenuation.
pub fn default_bank_specs(sample_rate: f64) -> [FirSpec; 4] {
    let s = sample_rate / 16000.0;
    let spec = |pass: (f64, f64), stop: (f64, f64)| FirSpec {
        passband: (pass.0 * s, pass.1 * s),
        stopband: (stop.0 * s, stop.1 * s),
        max_passband_ripple_db: 5.0,
        min_stopband_atten_db: 40.0,
        sample_rate,
    };
    [
        spec((0.0, 5000.0), (7000.0, 8000.0)),
        spec((7000.0, 8000.0), (0.0, 5000.0)),
        spec((0.0, 1000.0), (3000.0, 8000.0)),
        spec((3000.0, 8000.0), (0.0, 1000.0)),
    ]
}

pub fn design_default_bank(sample_rate: f64) -> Result<FirBank> {
    let [lpv, hpv, lpu, hpu] = default_bank_specs(sample_rate);
    Ok(FirBank {
        lp_voiced: design_equiripple(&lpv)?,
        hp_voiced: design_equiripple(&hpv)?,
        lp_unvoiced: design_equiripple(&lpu)?,
        hp_unvoiced: design_equiripple(&hpu)?,
    })
}

/// Linear deviation targets. The design aims somewhat inside the stated
/// envelope so the measured-response verification has margin.
fn deviation_targets(spec: &FirSpec) -> (f64, f64) {
    let rp = spec.max_passband_ripple_db;
    let delta_p = ((10f64).powf(rp / 20.0) - 1.0).min(1.0 - (10f64).powf(-rp / 20.0)) * 0.5;
    let delta_s = (10f64).powf(-spec.min_stopband_atten_db / 20.0) * 0.5;
    (delta_p, delta_s)
}

/// Kaiser estimate of the number of taps.
fn estimate_taps(spec: &FirSpec, delta_p: f64, delta_s: f64) -> usize {
    let nyq = spec.sample_rate / 2.0;
    let trans = if spec.is_lowpass() {
        spec.stopband.0 - spec.passband.1
    } else {
        spec.passband.0 - spec.stopband.1
    };
    let df = trans / spec.sample_rate;
    let n = (-20.0 * (delta_p * delta_s).sqrt().log10() - 13.0) / (14.6 * df) + 1.0;
    let mut taps = n.ceil().max(5.0) as usize;
    if taps % 2 == 0 {
        taps += 1;
    }
    let _ = nyq;
    taps
}

/// Design an equiripple filter by Remez exchange, incrementing the tap
/// count until the measured 4096-point response meets the spec.
pub fn design_equiripple(spec: &FirSpec) -> Result<FirCoefficients> {
    spec.validate()?;
    let (delta_p, delta_s) = deviation_targets(spec);
    let mut taps = estimate_taps(spec, delta_p, delta_s);
    while taps <= MAX_TAPS {
        if let Ok(c) = remez_two_band(spec, taps, delta_p, delta_s) {
            if meets_spec(&c, spec) {
                return Ok(c);
            }
        }
        taps += 2;
    }
    Err(Error::FilterDesign(format!(
        "spec unmeetable within order bound {}: pass {:?} stop {:?}",
        MAX_TAPS - 1,
        spec.passband,
        spec.stopband
    )))
}

fn meets_spec(c: &FirCoefficients, spec: &FirSpec) -> bool {
    let resp = frequency_response(c, VERIFY_GRID);
    let nyq = spec.sample_rate / 2.0;
    for (i, &db) in resp.iter().enumerate() {
        let f = nyq * i as f64 / (VERIFY_GRID - 1) as f64;
        if f >= spec.passband.0 && f <= spec.passband.1 && db.abs() > spec.max_passband_ripple_db {
            return false;
        }
        if f >= spec.stopband.0 && f <= spec.stopband.1 && db > -spec.min_stopband_atten_db {
            return false;
        }
    }
    true
}

struct DesignGrid {
    /// Normalized frequencies in [0, 0.5].
    freq: Vec<f64>,
    desired: Vec<f64>,
    weight: Vec<f64>,
}

fn build_grid(spec: &FirSpec, num_cosines: usize, delta_p: f64, delta_s: f64) -> DesignGrid {
    let nyq = spec.sample_rate / 2.0;
    let mut bands = [
        (spec.passband, 1.0, 1.0 / delta_p),
        (spec.stopband, 0.0, 1.0 / delta_s),
    ];
    bands.sort_by(|a, b| a.0 .0.partial_cmp(&b.0 .0).unwrap());
    let mut grid = DesignGrid {
        freq: Vec::new(),
        desired: Vec::new(),
        weight: Vec::new(),
    };
    let total_width: f64 = bands.iter().map(|b| (b.0 .1 - b.0 .0) / nyq).sum();
    for ((lo, hi), d, w) in bands {
        let width = (hi - lo) / nyq;
        let pts = ((num_cosines * GRID_DENSITY) as f64 * width / total_width)
            .ceil()
            .max(8.0) as usize;
        for i in 0..pts {
            let f = 0.5 * (lo + (hi - lo) * i as f64 / (pts - 1) as f64) / nyq;
            grid.freq.push(f);
            grid.desired.push(d);
            grid.weight.push(w);
        }
    }
    grid
}

/// Remez exchange for a two-band type-I design with `taps` coefficients.
fn remez_two_band(
    spec: &FirSpec,
    taps: usize,
    delta_p: f64,
    delta_s: f64,
) -> Result<FirCoefficients> {
    debug_assert!(taps % 2 == 1);
    let r = (taps - 1) / 2;
    let ncos = r + 1; // cosine basis size
    let next = ncos + 1; // extremal count
    let grid = build_grid(spec, ncos, delta_p, delta_s);
    let g = grid.freq.len();
    if g < next {
        return Err(Error::FilterDesign("grid too coarse".into()));
    }
    // initial extremal set: uniform over the grid
    let mut ext: Vec<usize> = (0..next)
        .map(|i| i * (g - 1) / (next - 1))
        .collect();
    let mut last_delta = 0.0f64;
    for _iter in 0..64 {
        let x: Vec<f64> = ext
            .iter()
            .map(|&i| (2.0 * std::f64::consts::PI * grid.freq[i]).cos())
            .collect();
        // barycentric weights
        let mut bary = vec![1.0f64; next];
        for k in 0..next {
            for j in 0..next {
                if j != k {
                    bary[k] /= x[k] - x[j];
                }
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..next {
            num += bary[k] * grid.desired[ext[k]];
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            den += sign * bary[k] / grid.weight[ext[k]];
        }
        if den.abs() < 1e-300 {
            return Err(Error::FilterDesign("degenerate extremal set".into()));
        }
        let delta = num / den;
        // interpolation values at the first ncos extremal points
        let y: Vec<f64> = (0..ncos)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                grid.desired[ext[k]] - sign * delta / grid.weight[ext[k]]
            })
            .collect();
        // barycentric weights for the ncos-point interpolation
        let xi = &x[..ncos];
        let mut bw = vec![1.0f64; ncos];
        for k in 0..ncos {
            for j in 0..ncos {
                if j != k {
                    bw[k] /= xi[k] - xi[j];
                }
            }
        }
        let eval = |f: f64| -> f64 {
            let xf = (2.0 * std::f64::consts::PI * f).cos();
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..ncos {
                let dx = xf - xi[k];
                if dx.abs() < 1e-14 {
                    return y[k];
                }
                let t = bw[k] / dx;
                num += t * y[k];
                den += t;
            }
            num / den
        };
        // weighted error on the whole grid
        let err: Vec<f64> = (0..g)
            .map(|i| grid.weight[i] * (grid.desired[i] - eval(grid.freq[i])))
            .collect();
        // locate candidate extrema: local maxima of |err| plus band edges
        let mut cand: Vec<usize> = Vec::new();
        for i in 0..g {
            let left = if i == 0 {
                true
            } else {
                err[i].abs() >= err[i - 1].abs()
            };
            let right = if i + 1 == g {
                true
            } else {
                err[i].abs() >= err[i + 1].abs()
            };
            // band boundary inside the grid also counts as an edge
            let edge = i > 0 && (grid.freq[i] - grid.freq[i - 1]) > 1e-9 + 1e-9 * grid.freq[i];
            if (left && right) || edge {
                cand.push(i);
            }
        }
        // enforce sign alternation, keeping the larger of same-sign runs
        let mut alt: Vec<usize> = Vec::new();
        for &i in &cand {
            if let Some(&last) = alt.last() {
                if err[i].signum() == err[last].signum() {
                    if err[i].abs() > err[last].abs() {
                        *alt.last_mut().unwrap() = i;
                    }
                    continue;
                }
            }
            alt.push(i);
        }
        // trim to the required count by dropping the smaller end extremum
        while alt.len() > next {
            if err[*alt.first().unwrap()].abs() <= err[*alt.last().unwrap()].abs() {
                alt.remove(0);
            } else {
                alt.pop();
            }
        }
        if alt.len() < next {
            return Err(Error::FilterDesign("lost alternation".into()));
        }
        let converged = (delta.abs() - last_delta.abs()).abs() <= 1e-9 * delta.abs().max(1e-12)
            && alt == ext;
        ext = alt;
        last_delta = delta;
        if converged {
            break;
        }
    }
    // final interpolation -> impulse response via inverse cosine series
    let x: Vec<f64> = ext
        .iter()
        .map(|&i| (2.0 * std::f64::consts::PI * grid.freq[i]).cos())
        .collect();
    let mut bary = vec![1.0f64; next];
    for k in 0..next {
        for j in 0..next {
            if j != k {
                bary[k] /= x[k] - x[j];
            }
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..next {
        num += bary[k] * grid.desired[ext[k]];
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        den += sign * bary[k] / grid.weight[ext[k]];
    }
    let delta = num / den;
    let y: Vec<f64> = (0..ncos)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            grid.desired[ext[k]] - sign * delta / grid.weight[ext[k]]
        })
        .collect();
    let xi = &x[..ncos];
    let mut bw = vec![1.0f64; ncos];
    for k in 0..ncos {
        for j in 0..ncos {
            if j != k {
                bw[k] /= xi[k] - xi[j];
            }
        }
    }
    let eval = |f: f64| -> f64 {
        let xf = (2.0 * std::f64::consts::PI * f).cos();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..ncos {
            let dx = xf - xi[k];
            if dx.abs() < 1e-14 {
                return y[k];
            }
            let t = bw[k] / dx;
            num += t * y[k];
            den += t;
        }
        num / den
    };
    // sample A(f) at taps points and invert the cosine series
    let n = taps;
    let a0 = eval(0.0);
    let samples: Vec<f64> = (1..=r).map(|i| eval(i as f64 / n as f64)).collect();
    let mut h = vec![0.0f64; n];
    for (m, hm) in h.iter_mut().enumerate() {
        let mut acc = a0;
        for (i, &ai) in samples.iter().enumerate() {
            let ang = 2.0 * std::f64::consts::PI * (i + 1) as f64 * (m as f64 - r as f64)
                / n as f64;
            acc += 2.0 * ai * ang.cos();
        }
        *hm = acc / n as f64;
    }
    Ok(FirCoefficients { taps: h })
}

/// Magnitude response in dB on a uniform grid over [0, Nyquist], computed
/// by direct evaluation.
pub fn frequency_response(c: &FirCoefficients, grid: usize) -> Vec<f64> {
    assert!(grid >= 2);
    (0..grid)
        .map(|i| {
            let omega = std::f64::consts::PI * i as f64 / (grid - 1) as f64;
            let mut re = 0.0;
            let mut im = 0.0;
            for (m, &h) in c.taps.iter().enumerate() {
                re += h * (omega * m as f64).cos();
                im -= h * (omega * m as f64).sin();
            }
            let mag = (re * re + im * im).sqrt();
            20.0 * mag.max(1e-300).log10()
        })
        .collect()
}

/// Causal convolution advanced by L/2 samples (group-delay compensation),
/// trimmed to the input length.
pub fn apply_fir<S: Scalar>(x: &[S], c: &FirCoefficients) -> Vec<S> {
    let delay = c.order() / 2;
    let t = x.len();
    (0..t)
        .map(|i| {
            let mut acc = S::zero();
            for (tap, &h) in c.taps.iter().enumerate() {
                let src = i as isize - tap as isize + delay as isize;
                if src >= 0 && (src as usize) < t {
                    acc += S::from_double(h) * x[src as usize];
                }
            }
            acc
        })
        .collect()
}

/// Merge harmonic and noise branches: the voiced filter pair where the
/// flag is set, the unvoiced pair elsewhere.
pub fn merge_branches<S: Scalar>(
    harmonic: &[S],
    noise: &[S],
    voiced: &[bool],
    bank: &FirBank,
) -> Result<Vec<S>> {
    if harmonic.len() != noise.len() || harmonic.len() != voiced.len() {
        return Err(Error::LengthMismatch(format!(
            "harmonic {} noise {} flags {}",
            harmonic.len(),
            noise.len(),
            voiced.len()
        )));
    }
    let hv = apply_fir(harmonic, &bank.lp_voiced);
    let nv = apply_fir(noise, &bank.hp_voiced);
    let hu = apply_fir(harmonic, &bank.lp_unvoiced);
    let nu = apply_fir(noise, &bank.hp_unvoiced);
    Ok((0..harmonic.len())
        .map(|t| {
            if voiced[t] {
                hv[t] + nv[t]
            } else {
                hu[t] + nu[t]
            }
        })
        .collect())
}

/// Per-sample voicing flags from an upsampled F0 track.
pub fn voicing_flags(f0: &[f32]) -> Vec<bool> {
    f0.iter().map(|&f| f > 0.0).collect()
}
