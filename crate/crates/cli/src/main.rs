//! `nsf` — command-line frontend: feature extraction, training, synthesis,
//! FIR design, gradient checking, parameter audits, and speed benchmarks.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nsf_core::array::Array;
use nsf_core::dsp::Waveform;
use nsf_core::fir;
use nsf_core::gradcheck;
use nsf_core::graph::Graph;
use nsf_core::io::checkpoint::{load_checkpoint, save_checkpoint};
use nsf_core::io::config::KvConfig;
use nsf_core::io::features::{read_features, write_features};
use nsf_core::io::manifest::{DatasetManifest, Split};
use nsf_core::io::mel::{extract_mel_spectrogram, MelConfig};
use nsf_core::io::wav::{read_wav, write_wav};
use nsf_core::model::{ForwardInput, Model, ModelConfig, ModelKind};
use nsf_core::pitch::{estimate_f0, PitchConfig};
use nsf_core::train::{align_pair, segment, synthesize, train, Segment, TrainConfig};
use nsf_core::SourceConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "nsf", about = "Neural source-filter vocoder toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract F0 + mel features from a mono 16-bit WAV file.
    Extract {
        /// Input waveform.
        wav: PathBuf,
        /// Output feature file (raw little-endian f32, 81 dims per frame).
        out: PathBuf,
    },
    /// Train a model from a config file and dataset manifest.
    Train {
        /// Flat key-value config file.
        #[arg(long)]
        config: PathBuf,
        /// Dataset manifest (split wav feat per line).
        #[arg(long)]
        manifest: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Training-log path (one epoch,train,val,seconds line per epoch).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Synthesize a waveform from a checkpoint and a feature file.
    Synth {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write per-block hidden waveforms next to the output.
        #[arg(long)]
        dump_blocks: bool,
        /// Excitation noise seed; omitted = noise-free.
        #[arg(long)]
        seed: Option<u64>,
        /// Print a samples/second timing report.
        #[arg(long)]
        timing: bool,
    },
    /// Design the fixed FIR filter bank and print taps and responses.
    DesignFir {
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
        /// Response-table grid points.
        #[arg(long, default_value_t = 33)]
        grid: usize,
    },
    /// Finite-difference check of the end-to-end analytic gradient.
    CheckGrad {
        #[arg(long, default_value = "hn-nsf")]
        kind: String,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 5)]
        stages: usize,
        /// Feature frames (waveform length = frames x 80).
        #[arg(long, default_value_t = 4)]
        frames: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Per-layer parameter audit table.
    CountParams {
        #[arg(long, default_value = "hn-nsf")]
        kind: String,
        /// Use the reduced test-size architecture instead of full size.
        #[arg(long)]
        reduced: bool,
    },
    /// Generation-speed scaling report over input lengths.
    Bench {
        #[arg(long, default_value = "s-nsf")]
        kind: String,
        /// Comma-separated input durations in seconds.
        #[arg(long, default_value = "1,2,4,8")]
        seconds: String,
        /// Use the reduced architecture (much faster).
        #[arg(long)]
        reduced: bool,
    },
}

fn main() -> Result<()> {
    if let Ok(threads) = std::env::var("NSF_THREADS") {
        let n: usize = threads
            .parse()
            .context("NSF_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("failed to configure thread pool")?;
    }
    match Cli::parse().command {
        Command::Extract { wav, out } => cmd_extract(&wav, &out),
        Command::Train {
            config,
            manifest,
            out,
            log,
        } => cmd_train(&config, &manifest, &out, log.as_deref()),
        Command::Synth {
            checkpoint,
            features,
            out,
            dump_blocks,
            seed,
            timing,
        } => cmd_synth(&checkpoint, &features, &out, dump_blocks, seed, timing),
        Command::DesignFir { sample_rate, grid } => cmd_design_fir(sample_rate, grid),
        Command::CheckGrad {
            kind,
            blocks,
            stages,
            frames,
            tolerance,
        } => cmd_check_grad(&kind, blocks, stages, frames, tolerance),
        Command::CountParams { kind, reduced } => cmd_count_params(&kind, reduced),
        Command::Bench {
            kind,
            seconds,
            reduced,
        } => cmd_bench(&kind, &seconds, reduced),
    }
}

/// F0 (column 0) + 80 log-mel bands, aligned so every frame covers exactly
/// 80 samples; the waveform tail is zero-padded for the mel analysis.
fn extract_features(wave: &Waveform) -> Result<Array<f32>> {
    let mel_cfg = MelConfig::default();
    let shift = mel_cfg.stft.frame_shift;
    let pad = mel_cfg.stft.frame_length - shift;
    let mut padded = wave.clone();
    padded.samples.extend(std::iter::repeat(0.0).take(pad));
    let mel = extract_mel_spectrogram(&padded, &mel_cfg)?;
    let pitch_cfg = PitchConfig {
        frame_shift: shift,
        ..PitchConfig::for_sample_rate(wave.sample_rate)
    };
    let f0 = estimate_f0(wave, &pitch_cfg);
    let frames = mel.rows().min(f0.len());
    let mut out = Array::zeros(frames, 1 + mel.cols());
    for r in 0..frames {
        out.set(r, 0, f0[r]);
        out.row_mut(r)[1..].copy_from_slice(mel.row(r));
    }
    Ok(out)
}

fn cmd_extract(wav: &Path, out: &Path) -> Result<()> {
    let wave = read_wav(wav)?;
    let feat = extract_features(&wave)?;
    write_features(&feat, out)?;
    println!(
        "extracted {} frames x {} dims from {} samples -> {}",
        feat.rows(),
        feat.cols(),
        wave.samples.len(),
        out.display()
    );
    Ok(())
}

fn load_segments(
    manifest: &DatasetManifest,
    split: Split,
    model_cfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<Vec<Segment>> {
    let mut segs = Vec::new();
    for entry in manifest.split(split) {
        let wave = read_wav(&entry.wav)?;
        let feat = match &entry.features {
            Some(p) => read_features(p, 1 + model_cfg.feat_dim)?,
            None => extract_features(&wave)?,
        };
        let (samples, feat, trimmed) = align_pair(&wave, &feat, model_cfg.frame_shift)?;
        if trimmed {
            eprintln!(
                "note: {} trimmed to {} samples to match features",
                entry.wav.display(),
                samples.len()
            );
        }
        segs.extend(segment(
            &samples,
            &feat,
            model_cfg.frame_shift,
            tcfg.max_segment_seconds,
            wave.sample_rate,
        ));
    }
    Ok(segs)
}

fn model_config_from_kv(kv: &KvConfig) -> Result<ModelConfig> {
    let kind = ModelKind::parse(&kv.get_str("kind", "hn-nsf"))?;
    let full = ModelConfig::full(kind);
    Ok(ModelConfig {
        kind,
        feat_dim: kv.get_usize("feat_dim", full.feat_dim)?,
        lstm_hidden: kv.get_usize("lstm_hidden", full.lstm_hidden)?,
        cond_width: kv.get_usize("cond_width", full.cond_width)?,
        blocks: kv.get_usize("blocks", full.blocks)?,
        stages: kv.get_usize("stages_per_block", full.stages)?,
        residual: kv.get_usize("residual_width", full.residual)?,
        skip: kv.get_usize("skip_width", full.skip)?,
        kernel: kv.get_usize("kernel", full.kernel)?,
        harmonics: kv.get_usize("harmonics", full.harmonics)?,
        frame_shift: kv.get_usize("frame_shift", full.frame_shift)?,
        sample_rate: kv.get_u64("sample_rate", full.sample_rate as u64)? as u32,
    })
}

fn cmd_train(config: &Path, manifest: &Path, out: &Path, log: Option<&Path>) -> Result<()> {
    let kv = KvConfig::load(config)?;
    let model_cfg = model_config_from_kv(&kv)?;
    let tcfg = TrainConfig::from_kv(&kv)?;
    let manifest = DatasetManifest::load(manifest)?;
    let train_segs = load_segments(&manifest, Split::Train, &model_cfg, &tcfg)?;
    let val_segs = load_segments(&manifest, Split::Validation, &model_cfg, &tcfg)?;
    if train_segs.is_empty() || val_segs.is_empty() {
        bail!("manifest has an empty train or validation split");
    }
    let model = Model::<f32>::init(model_cfg, tcfg.seed)?;
    println!(
        "training {} ({} parameters) on {} segments, validating on {}",
        model.config.kind.as_str(),
        model.count_parameters(),
        train_segs.len(),
        val_segs.len()
    );
    let (best, tlog) = train(model, &train_segs, &val_segs, &tcfg)?;
    save_checkpoint(&best, out)?;
    if let Some(log_path) = log {
        std::fs::write(log_path, tlog.to_text())?;
    }
    println!(
        "done: {} epochs, {} steps ({} skipped), best epoch {}{}",
        tlog.epochs.len(),
        tlog.total_steps,
        tlog.skipped_steps,
        tlog.best_epoch,
        if tlog.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    println!("checkpoint: {}", out.display());
    Ok(())
}

fn cmd_synth(
    checkpoint: &Path,
    features: &Path,
    out: &Path,
    dump_blocks: bool,
    seed: Option<u64>,
    timing: bool,
) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let feat = read_features(features, 1 + model.config.feat_dim)?;
    let (wave, blocks, report) = synthesize(&model, &feat, seed, dump_blocks)?;
    write_wav(&wave, out)?;
    println!("wrote {} samples to {}", wave.samples.len(), out.display());
    if let Some(blocks) = blocks {
        for (i, b) in blocks.iter().enumerate() {
            let path = out.with_extension(format!("block{i}.wav"));
            write_wav(
                &Waveform {
                    samples: b.clone(),
                    sample_rate: wave.sample_rate,
                },
                &path,
            )?;
            println!("block {i} -> {}", path.display());
        }
    }
    if timing {
        println!(
            "timing: {} samples in {:.3} s = {:.0} samples/s",
            report.samples, report.seconds, report.samples_per_second
        );
    }
    Ok(())
}

fn cmd_design_fir(sample_rate: u32, grid: usize) -> Result<()> {
    let specs = fir::default_bank_specs(sample_rate as f64);
    let names = ["lp_voiced", "hp_voiced", "lp_unvoiced", "hp_unvoiced"];
    for (name, spec) in names.iter().zip(specs.iter()) {
        let c = fir::design_equiripple(spec)?;
        println!(
            "# {name}: order {}, passband {:?} Hz, stopband {:?} Hz",
            c.order(),
            spec.passband,
            spec.stopband
        );
        println!("taps = {:?}", c.taps);
        let resp = fir::frequency_response(&c, grid);
        println!("freq_hz,magnitude_db");
        for (i, db) in resp.iter().enumerate() {
            let f = sample_rate as f64 / 2.0 * i as f64 / (grid - 1) as f64;
            println!("{f:.1},{db:.2}");
        }
        println!();
    }
    Ok(())
}

fn cmd_check_grad(
    kind: &str,
    blocks: usize,
    stages: usize,
    frames: usize,
    tolerance: f64,
) -> Result<()> {
    let kind = ModelKind::parse(kind)?;
    let cfg = ModelConfig::reduced(kind, blocks, stages);
    let model = Model::<f64>::init(cfg, 17)?;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (features, target) = synthetic_batch(&cfg, frames, &mut rng);
    let loss_cfg = nsf_core::MultiResLossConfig::new(
        vec![nsf_core::StftConfig::new(128, 80, 40)?],
        1e-5,
    )?;
    let f0: Vec<f32> = (0..frames).map(|r| features.get(r, 0) as f32).collect();
    let src = SourceConfig::default();
    let f0_up = nsf_core::dsp::upsample_scalar(&f0, cfg.frame_shift);
    let harmonics = nsf_core::source::harmonic_stack::<f64, ChaCha8Rng>(
        &f0_up,
        &SourceConfig {
            harmonics: cfg.harmonics,
            sample_rate: cfg.sample_rate as f64,
            ..src
        },
        None,
    )?;
    let noise: Vec<f64> = (0..f0_up.len()).map(|i| (i as f64 * 0.61).sin() * 0.01).collect();
    let voiced: Vec<bool> = f0_up.iter().map(|&f| f > 0.0).collect();
    let eval = |params: &[(String, Array<f64>)]| -> f64 {
        let m = Model::from_parts(cfg, params.to_vec(), model.fir_bank.clone());
        let mut g = Graph::new();
        let trace = m
            .forward(
                &mut g,
                &ForwardInput {
                    features: &features,
                    harmonics: &harmonics,
                    noise: &noise,
                    voiced: &voiced,
                },
            )
            .expect("forward");
        let out = g.value(trace.output).data();
        nsf_core::loss::multi_res_loss_value(out, &target, &loss_cfg)
            .expect("loss")
    };
    // analytic gradients
    let mut g = Graph::new();
    let trace = model.forward(
        &mut g,
        &ForwardInput {
            features: &features,
            harmonics: &harmonics,
            noise: &noise,
            voiced: &voiced,
        },
    )?;
    let loss_node = g.spectral_loss(trace.output, &target, &loss_cfg)?;
    g.backward_scalar(loss_node)?;
    let grads: Vec<Array<f64>> = g.param_grads().iter().map(|a| (*a).clone()).collect();
    // near-zero entries are dominated by finite-difference noise, so the
    // error denominator is floored at a fraction of the gradient's scale
    let gmax = grads
        .iter()
        .flat_map(|a| a.data().iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let floor = (1e-3 * gmax).max(1e-8);
    let mut params = model.params.clone();
    let report = gradcheck::grad_check_params(&mut params, &grads, 1e-5, floor, eval);
    println!(
        "checked {} parameter entries, max relative error {:.3e}",
        report.checked, report.max_rel_error
    );
    if let Some(w) = &report.worst {
        println!(
            "worst: {}[{}] analytic {:.6e} numeric {:.6e}",
            w.name, w.index, w.analytic, w.numeric
        );
    }
    if !report.passes(tolerance) {
        bail!("gradient check failed tolerance {tolerance}");
    }
    println!("gradient check passed (tolerance {tolerance})");
    Ok(())
}

fn synthetic_batch(
    cfg: &ModelConfig,
    frames: usize,
    _rng: &mut ChaCha8Rng,
) -> (Array<f64>, Vec<f64>) {
    let mut feat = Array::zeros(frames, 1 + cfg.feat_dim);
    for r in 0..frames {
        feat.set(r, 0, if r % 4 == 3 { 0.0 } else { 200.0 });
        for d in 0..cfg.feat_dim {
            feat.set(r, 1 + d, ((r * 13 + d * 7) as f64 * 0.11).sin() * 0.3);
        }
    }
    let t = frames * cfg.frame_shift;
    let target: Vec<f64> = (0..t)
        .map(|i| {
            (2.0 * std::f64::consts::PI * 200.0 * i as f64 / cfg.sample_rate as f64).sin() * 0.2
        })
        .collect();
    (feat, target)
}

fn cmd_count_params(kind: &str, reduced: bool) -> Result<()> {
    let kind = ModelKind::parse(kind)?;
    let cfg = if reduced {
        ModelConfig::reduced(kind, 2, 5)
    } else {
        ModelConfig::full(kind)
    };
    let model = Model::<f32>::init(cfg, 0)?;
    println!("{:<28} {:>12} {:>10}", "parameter", "shape", "count");
    for (name, (r, c), n) in model.parameter_table() {
        println!("{:<28} {:>12} {:>10}", name, format!("{r}x{c}"), n);
    }
    println!(
        "{:<28} {:>12} {:>10}",
        "total",
        "",
        model.count_parameters()
    );
    Ok(())
}

fn cmd_bench(kind: &str, seconds: &str, reduced: bool) -> Result<()> {
    let kind = ModelKind::parse(kind)?;
    let cfg = if reduced {
        ModelConfig::reduced(kind, 2, 5)
    } else {
        ModelConfig::full(kind)
    };
    let model = Model::<f32>::init(cfg, 0)?;
    let durations: Vec<f64> = seconds
        .split(',')
        .map(|s| s.trim().parse().context("bad --seconds list"))
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    println!("seconds,samples,wall_s,samples_per_s");
    for &secs in &durations {
        let frames = (secs * cfg.sample_rate as f64 / cfg.frame_shift as f64) as usize;
        let mut feat = Array::zeros(frames, 1 + cfg.feat_dim);
        for r in 0..frames {
            feat.set(r, 0, 150.0);
            for d in 0..cfg.feat_dim {
                feat.set(r, 1 + d, ((r + d) as f32 * 0.05).sin() * 0.2);
            }
        }
        let (_, _, report) = synthesize(&model, &feat, Some(0), false)?;
        println!(
            "{secs},{},{:.4},{:.0}",
            report.samples, report.seconds, report.samples_per_second
        );
        points.push((report.samples as f64, report.seconds));
    }
    let r2 = linear_r2(&points);
    println!("linearity R^2 over input length: {r2:.4}");
    Ok(())
}

/// Coefficient of determination of the least-squares line through (x, y).
fn linear_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    (sxy * sxy) / (sxx * syy)
}
