//! File formats: WAV audio, raw feature matrices, checkpoints, flat
//! key-value configs, dataset manifests, and mel-spectrogram extraction.

pub mod checkpoint;
pub mod config;
pub mod features;
pub mod manifest;
pub mod mel;
pub mod wav;
