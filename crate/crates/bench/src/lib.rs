//! Shared fixtures for the criterion benchmarks.

use nsf_core::array::Array;
use nsf_core::model::{Model, ModelConfig, ModelKind};

/// Deterministic synthetic feature matrix (F0 column + spectral columns).
pub fn synthetic_features(cfg: &ModelConfig, seconds: f64) -> Array<f32> {
    let frames = (seconds * cfg.sample_rate as f64 / cfg.frame_shift as f64) as usize;
    let mut feat = Array::zeros(frames, 1 + cfg.feat_dim);
    for r in 0..frames {
        feat.set(r, 0, 150.0);
        for d in 0..cfg.feat_dim {
            feat.set(r, 1 + d, ((r + d) as f32 * 0.05).sin() * 0.2);
        }
    }
    feat
}

pub fn reduced_model(kind: ModelKind) -> Model<f32> {
    Model::init(ModelConfig::reduced(kind, 2, 5), 0).expect("model init")
}
