//! Adam optimizer with bias-corrected moment estimates and global-norm
//! gradient clipping.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam<S: Scalar> {
    cfg: AdamConfig,
    m: Vec<Array<S>>,
    v: Vec<Array<S>>,
    step: u64,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Adam {
            cfg,
            m: shapes.iter().map(|&(r, c)| Array::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Array::zeros(r, c)).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over all parameters. Gradients with non-finite entries
    /// skip the step (the moments are left untouched).
    pub fn step(&mut self, params: &mut [(String, Array<S>)], grads: &[Array<S>]) -> Result<bool> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                op: "adam-step",
                details: format!(
                    "{} params, {} grads, {} slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            });
        }
        if grads.iter().any(|g| !g.all_finite()) {
            return Ok(false);
        }
        self.step += 1;
        let b1 = S::from_double(self.cfg.beta1);
        let b2 = S::from_double(self.cfg.beta2);
        let corr1 = 1.0 - self.cfg.beta1.powi(self.step as i32);
        let corr2 = 1.0 - self.cfg.beta2.powi(self.step as i32);
        let lr = S::from_double(self.cfg.lr);
        let c1 = S::from_double(1.0 / corr1);
        let c2 = S::from_double(1.0 / corr2);
        let eps = S::from_double(self.cfg.eps);
        for i in 0..params.len() {
            let p = params[i].1.data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for j in 0..p.len() {
                let g = grads[i].data()[j];
                m[j] = b1 * m[j] + (S::one() - b1) * g;
                v[j] = b2 * v[j] + (S::one() - b2) * g * g;
                let mh = m[j] * c1;
                let vh = v[j] * c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(true)
    }
}

/// Scale all gradients in place so the global L2 norm is at most
/// `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut [Array<S>], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|&v| v.to_double() * v.to_double())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = S::from_double(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}
