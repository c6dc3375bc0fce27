//! Training loop (segmentation, seeded shuffling, Adam with global-norm
//! clipping, early stopping on validation loss) and synthesis.

use crate::array::Array;
use crate::dsp::{upsample_scalar, Waveform};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::config::KvConfig;
use crate::loss::{self, MultiResLossConfig};
use crate::model::{ForwardInput, Model, ModelConfig};
use crate::optim::{clip_global_norm, Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::source::{harmonic_stack, noise_excitation, SourceConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Training hyper-parameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_segment_seconds: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Stop after this many optimizer steps regardless of epochs.
    pub max_steps: Option<u64>,
    pub clip_norm: f64,
    pub seed: u64,
    pub loss: MultiResLossConfig,
    pub source: SourceConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 1,
            max_segment_seconds: 3.0,
            patience: 5,
            max_epochs: 100,
            max_steps: None,
            clip_norm: 5.0,
            seed: 1,
            loss: MultiResLossConfig::default_triples(),
            source: SourceConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let mut t = TrainConfig::default();
        t.adam.lr = cfg.get_f64("learning_rate", t.adam.lr)?;
        t.adam.beta1 = cfg.get_f64("beta1", t.adam.beta1)?;
        t.adam.beta2 = cfg.get_f64("beta2", t.adam.beta2)?;
        t.adam.eps = cfg.get_f64("epsilon", t.adam.eps)?;
        t.batch_size = cfg.get_usize("batch_size", t.batch_size)?;
        t.max_segment_seconds = cfg.get_f64("max_segment_seconds", t.max_segment_seconds)?;
        t.patience = cfg.get_usize("patience", t.patience)?;
        t.max_epochs = cfg.get_usize("max_epochs", t.max_epochs)?;
        t.clip_norm = cfg.get_f64("clip_norm", t.clip_norm)?;
        t.seed = cfg.get_u64("seed", t.seed)?;
        if let Some(steps) = cfg.get("max_steps") {
            t.max_steps = Some(steps.parse().map_err(|_| {
                Error::Config(format!("max_steps: bad integer {steps:?}"))
            })?);
        }
        if let Some(triples) = cfg.get_stft_triples("loss_stft")? {
            let configs = triples
                .iter()
                .map(|&(k, m, s)| crate::dsp::StftConfig::new(k, m, s))
                .collect::<Result<Vec<_>>>()?;
            t.loss = MultiResLossConfig::new(configs, cfg.get_f64("eta", 1e-5)?)?;
        }
        t.source.sigma = cfg.get_f64("sigma", t.source.sigma)?;
        t.source.alpha = cfg.get_f64("alpha", t.source.alpha)?;
        t.source.harmonics = cfg.get_usize("num_harmonics", t.source.harmonics)?;
        if t.patience == 0 || t.batch_size == 0 || t.max_segment_seconds <= 0.0 {
            return Err(Error::Config("patience, batch size, and segment length must be positive".into()));
        }
        Ok(t)
    }
}

/// One training example: aligned frame-rate features and target samples.
#[derive(Clone, Debug)]
pub struct Segment {
    /// `B x (1 + feat_dim)`, F0 in column 0.
    pub features: Array<f32>,
    /// Target waveform, length `B * frame_shift`.
    pub target: Vec<f32>,
}

/// Trim a waveform/feature pair to compatible lengths (waveform to
/// `B * frame_shift` samples, features to the frames the waveform covers).
/// Returns the trimmed pair and whether anything was discarded.
pub fn align_pair(
    wave: &Waveform,
    feat: &Array<f32>,
    frame_shift: usize,
) -> Result<(Vec<f32>, Array<f32>, bool)> {
    let b_feat = feat.rows();
    let b_wave = wave.samples.len() / frame_shift;
    let b = b_feat.min(b_wave);
    if b == 0 {
        return Err(Error::LengthMismatch(format!(
            "pair too short: {} samples, {} frames",
            wave.samples.len(),
            b_feat
        )));
    }
    let t = b * frame_shift;
    let trimmed = t != wave.samples.len() || b != b_feat;
    let samples = wave.samples[..t].to_vec();
    let mut out = Array::zeros(b, feat.cols());
    for r in 0..b {
        out.row_mut(r).copy_from_slice(feat.row(r));
    }
    Ok((samples, out, trimmed))
}

/// Cut an aligned pair into segments of at most `max_seconds`, at frame
/// boundaries; the last segment may be shorter. Concatenating the segments
/// reproduces the input.
pub fn segment(
    samples: &[f32],
    feat: &Array<f32>,
    frame_shift: usize,
    max_seconds: f64,
    sample_rate: u32,
) -> Vec<Segment> {
    let b = feat.rows();
    debug_assert_eq!(samples.len(), b * frame_shift);
    let max_frames = ((max_seconds * sample_rate as f64) as usize / frame_shift).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start < b {
        let end = (start + max_frames).min(b);
        let mut f = Array::zeros(end - start, feat.cols());
        for r in start..end {
            f.row_mut(r - start).copy_from_slice(feat.row(r));
        }
        out.push(Segment {
            features: f,
            target: samples[start * frame_shift..end * frame_shift].to_vec(),
        });
        start = end;
    }
    out
}

/// Waveform-rate excitation inputs for a feature segment. `rng = None`
/// gives the deterministic noise-free variant used for validation.
pub fn build_excitations(
    f0_frames: &[f32],
    cfg: &ModelConfig,
    source: &SourceConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<Vec<f32>>, Vec<f32>, Vec<bool>)> {
    let f0 = upsample_scalar(f0_frames, cfg.frame_shift);
    let src = SourceConfig {
        harmonics: cfg.harmonics,
        sample_rate: cfg.sample_rate as f64,
        ..*source
    };
    let harmonics = harmonic_stack::<f32, ChaCha8Rng>(&f0, &src, rng.as_deref_mut())?;
    let noise = noise_excitation::<f32, ChaCha8Rng>(f0.len(), &src, rng);
    let voiced: Vec<bool> = f0.iter().map(|&f| f > 0.0).collect();
    Ok((harmonics, noise, voiced))
}

#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub skipped_steps: u64,
    pub total_steps: u64,
}

impl TrainLog {
    /// One `epoch,train_loss,val_loss,seconds` line per epoch.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.3}\n",
                e.epoch, e.train_loss, e.val_loss, e.seconds
            ));
        }
        s
    }
}

/// Index of the best (minimum) validation loss, and whether the curve has
/// strictly increased for `patience` consecutive epochs.
pub fn early_stop_decision(val_losses: &[f64], patience: usize) -> (usize, bool) {
    let best = val_losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut increases = 0;
    for w in val_losses.windows(2) {
        if w[1] > w[0] {
            increases += 1;
        } else {
            increases = 0;
        }
    }
    (best, increases >= patience)
}

fn mix_seed(seed: u64, epoch: u64, item: u64) -> u64 {
    // splitmix-style mixing for per-(epoch, segment) noise streams
    let mut z = seed
        .wrapping_add(epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(item.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn segment_loss_value(
    model: &Model<f32>,
    seg: &Segment,
    tcfg: &TrainConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let f0: Vec<f32> = (0..seg.features.rows())
        .map(|r| seg.features.get(r, 0))
        .collect();
    let (harmonics, noise, voiced) =
        build_excitations(&f0, &model.config, &tcfg.source, rng)?;
    let mut g = Graph::new();
    let trace = model.forward(
        &mut g,
        &ForwardInput {
            features: &seg.features,
            harmonics: &harmonics,
            noise: &noise,
            voiced: &voiced,
        },
    )?;
    let out = g.value(trace.output).data();
    Ok(loss::multi_res_loss_value(out, &seg.target, &tcfg.loss)?.to_double())
}

/// Train `model` on the given segments. Returns the best-validation model
/// and the per-epoch log. Deterministic in (`tcfg.seed`, thread count).
pub fn train(
    mut model: Model<f32>,
    train_segs: &[Segment],
    val_segs: &[Segment],
    tcfg: &TrainConfig,
) -> Result<(Model<f32>, TrainLog)> {
    if train_segs.is_empty() || val_segs.is_empty() {
        return Err(Error::Train("empty train or validation split".into()));
    }
    let shapes: Vec<(usize, usize)> = model.params.iter().map(|(_, a)| a.shape()).collect();
    let mut opt = Adam::<f32>::new(tcfg.adam, &shapes);
    let mut log = TrainLog::default();
    let mut val_history: Vec<f64> = Vec::new();
    let mut best_params: Option<Vec<(String, Array<f32>)>> = None;
    let mut steps: u64 = 0;
    'epochs: for epoch in 0..tcfg.max_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_segs.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(tcfg.seed, epoch as u64, 0));
        order.shuffle(&mut shuffle_rng);
        let mut train_loss_sum = 0.0;
        let mut budget_exhausted = false;
        for (i, &si) in order.iter().enumerate() {
            let seg = &train_segs[si];
            let f0: Vec<f32> = (0..seg.features.rows())
                .map(|r| seg.features.get(r, 0))
                .collect();
            let mut noise_rng =
                ChaCha8Rng::seed_from_u64(mix_seed(tcfg.seed, epoch as u64, 1 + i as u64));
            let (harmonics, noise, voiced) =
                build_excitations(&f0, &model.config, &tcfg.source, Some(&mut noise_rng))?;
            let mut g = Graph::new();
            let trace = model.forward(
                &mut g,
                &ForwardInput {
                    features: &seg.features,
                    harmonics: &harmonics,
                    noise: &noise,
                    voiced: &voiced,
                },
            )?;
            let loss_node = g.spectral_loss(trace.output, &seg.target, &tcfg.loss)?;
            let loss_value = g.value(loss_node).item().to_double();
            if !loss_value.is_finite() {
                return Err(Error::Train(format!(
                    "non-finite loss at epoch {epoch}, segment {si}"
                )));
            }
            train_loss_sum += loss_value;
            g.backward_scalar(loss_node)?;
            let mut grads: Vec<Array<f32>> =
                g.param_grads().iter().map(|a| (*a).clone()).collect();
            clip_global_norm(&mut grads, tcfg.clip_norm);
            if !opt.step(&mut model.params, &grads)? {
                log.skipped_steps += 1;
            }
            steps += 1;
            if let Some(max) = tcfg.max_steps {
                if steps >= max {
                    budget_exhausted = true;
                    break;
                }
            }
        }
        let seen = if budget_exhausted {
            // count the segments actually visited this epoch
            let per_epoch = order.len() as u64;
            let done = steps % per_epoch;
            if done == 0 {
                per_epoch
            } else {
                done
            }
        } else {
            order.len() as u64
        };
        let train_loss = train_loss_sum / seen as f64;
        let mut val_loss_sum = 0.0;
        for seg in val_segs {
            val_loss_sum += segment_loss_value(&model, seg, tcfg, None)?;
        }
        let val_loss = val_loss_sum / val_segs.len() as f64;
        val_history.push(val_loss);
        let (best, stop) = early_stop_decision(&val_history, tcfg.patience);
        if best == val_history.len() - 1 || best_params.is_none() {
            best_params = Some(model.params.clone());
            log.best_epoch = epoch;
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
        if stop {
            log.stopped_early = true;
            break 'epochs;
        }
        if budget_exhausted {
            break 'epochs;
        }
    }
    log.total_steps = steps;
    let best = Model::from_parts(
        model.config,
        best_params.expect("at least one epoch ran"),
        model.fir_bank.clone(),
    );
    Ok((best, log))
}

/// Timing summary of one synthesis call.
#[derive(Clone, Copy, Debug)]
pub struct TimingReport {
    pub samples: usize,
    pub seconds: f64,
    pub samples_per_second: f64,
}

/// One non-sequential forward pass from features to waveform. `seed`
/// controls the excitation noise (`None` = noise-free). With
/// `dump_blocks`, the per-block hidden waveforms are returned too.
pub fn synthesize(
    model: &Model<f32>,
    features: &Array<f32>,
    seed: Option<u64>,
    dump_blocks: bool,
) -> Result<(Waveform, Option<Vec<Vec<f32>>>, TimingReport)> {
    if features.cols() != 1 + model.config.feat_dim {
        return Err(Error::ShapeMismatch {
            op: "synthesize-features",
            details: format!(
                "{} dims, model expects {}",
                features.cols(),
                1 + model.config.feat_dim
            ),
        });
    }
    let f0: Vec<f32> = (0..features.rows()).map(|r| features.get(r, 0)).collect();
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let (harmonics, noise, voiced) = build_excitations(
        &f0,
        &model.config,
        &SourceConfig::default(),
        rng.as_mut(),
    )?;
    let start = Instant::now();
    let mut g = Graph::new();
    let trace = model.forward(
        &mut g,
        &ForwardInput {
            features,
            harmonics: &harmonics,
            noise: &noise,
            voiced: &voiced,
        },
    )?;
    let seconds = start.elapsed().as_secs_f64();
    let samples = g.value(trace.output).data().to_vec();
    let blocks = if dump_blocks {
        Some(
            trace
                .block_outputs
                .iter()
                .map(|&id| g.value(id).data().to_vec())
                .collect(),
        )
    } else {
        None
    };
    let n = samples.len();
    Ok((
        Waveform {
            samples,
            sample_rate: model.config.sample_rate,
        },
        blocks,
        TimingReport {
            samples: n,
            seconds,
            samples_per_second: n as f64 / seconds.max(1e-12),
        },
    ))
}
