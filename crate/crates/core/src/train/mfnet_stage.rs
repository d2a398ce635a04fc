//! Stage B: render the frozen generator's outputs and train MF-Net to remove
//! injected transients and residual artifacts.

use std::path::{Path, PathBuf};

use candle_core::DType;
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_gan, save_mfnet, LoadedGan};
use super::config::{Stage, TrainConfig};
use super::data::{stack_waves, SegmentSampler};
use super::log::LossLog;
use super::optim::Optimizer;
use super::{load_training_pairs, run_scoped, scalar, StepLosses, TrainSummary};
use crate::degrade::{inject_transient, load_pairs, CorpusManifest};
use crate::dsp::{read_wav_at, synth, write_wav, Waveform};
use crate::error::{Error, Result};
use crate::mfnet::MfNet;
use crate::nn::{waveform_loss, MrStftLoss, ParamStore};

pub const MFNET_TERMS: [&str; 3] = ["mrstft", "wave", "total"];
pub const RENDERED_MANIFEST: &str = "rendered.jsonl";

/// Restore every degraded clip with a frozen generator.
pub fn render_in_memory(gan: &LoadedGan, degraded: &[Waveform]) -> Result<Vec<Waveform>> {
    degraded.iter().map(|w| gan.model.restore(w)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedRecord {
    pub id: String,
    pub gan_out: PathBuf,
    pub clean: PathBuf,
    pub degraded: PathBuf,
    pub gan_checkpoint_hash: String,
}

/// Write `{id}_gan.wav` plus a provenance sidecar for every corpus record
/// and a `rendered.jsonl` manifest.
pub fn render_gan_outputs(gan_ckpt: &Path, corpus: &Path, out_dir: &Path) -> Result<Vec<RenderedRecord>> {
    let gan = load_gan(gan_ckpt, DType::F32)?;
    let manifest = CorpusManifest::load(corpus)?;
    let pairs = load_pairs(&manifest)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = Vec::with_capacity(pairs.len());
    for (rec, (id, degraded, _)) in manifest.records.iter().zip(&pairs) {
        let restored = gan.model.restore(degraded)?;
        let wav = out_dir.join(format!("{id}_gan.wav"));
        write_wav(&wav, &restored)?;
        let r = RenderedRecord {
            id: id.clone(),
            gan_out: wav.clone(),
            clean: rec.clean_out.clone().unwrap_or_else(|| rec.clean.clone()),
            degraded: rec.degraded_out.clone().expect("load_pairs checked"),
            gan_checkpoint_hash: gan.meta.weights_hash.clone(),
        };
        let side = wav.with_extension("json");
        std::fs::write(&side, serde_json::to_string_pretty(&r)?).map_err(|e| Error::io(&side, e))?;
        out.push(r);
    }
    let path = out_dir.join(RENDERED_MANIFEST);
    let text: String = out
        .iter()
        .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
        .collect::<std::result::Result<_, _>>()?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(out)
}

fn transient_bank(cfg: &TrainConfig, sr: u32) -> Result<Vec<Waveform>> {
    let m = &cfg.mfnet;
    let mut bank = m
        .transient_files
        .iter()
        .map(|p| read_wav_at(p, sr))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..m.synthetic_transients {
        let len_s = 0.03 + 0.02 * (i % 5) as f64;
        bank.push(synth::transient_burst(cfg.seed.wrapping_add(1000 + i as u64), len_s, sr));
    }
    Ok(bank)
}

/// Train from the corpus in `cfg`, rendering generator outputs on the fly.
pub fn train_mfnet(cfg: &TrainConfig, gan_ckpt: &Path) -> Result<TrainSummary> {
    let pairs = load_training_pairs(&cfg.corpus)?;
    let gan = load_gan(gan_ckpt, DType::F32)?;
    train_mfnet_with(cfg, &gan, pairs)
}

/// Train on in-memory `(degraded, clean)` pairs against a loaded generator.
pub fn train_mfnet_with(cfg: &TrainConfig, gan: &LoadedGan, pairs: Vec<(Waveform, Waveform)>) -> Result<TrainSummary> {
    if cfg.stage != Stage::Mfnet {
        return Err(Error::config("train_mfnet needs stage = mfnet"));
    }
    cfg.validate()?;
    let sr = cfg.mfnet.model.stft.sample_rate_hz;
    if gan.model.config().stft.sample_rate_hz != sr {
        return Err(Error::config("generator and MF-Net sample rates differ"));
    }
    if let Some((w, _)) = pairs.iter().find(|(w, _)| w.sample_rate() != sr) {
        return Err(Error::config(format!("corpus is at {} Hz, MF-Net at {sr} Hz", w.sample_rate())));
    }
    run_scoped(cfg.deterministic, || {
        let degraded: Vec<Waveform> = pairs.iter().map(|(d, _)| d.clone()).collect();
        let rendered = render_in_memory(gan, &degraded)?;
        let staged = rendered.into_iter().zip(pairs.into_iter().map(|(_, c)| c)).collect();
        run(cfg, &gan.meta.weights_hash, staged)
    })
}

fn run(cfg: &TrainConfig, gan_hash: &str, pairs: Vec<(Waveform, Waveform)>) -> Result<TrainSummary> {
    let dtype = DType::F32;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let m = &cfg.mfnet;
    let sr = m.model.stft.sample_rate_hz;
    let mut ps = ParamStore::new(cfg.seed, dtype);
    let net = MfNet::new(&mut ps, &m.model)?;
    let mr = MrStftLoss::new(&m.mrstft_resolutions, dtype)?;
    let mut opt = Optimizer::new(ps.vars(), &cfg.optim)?;
    let segment = cfg.segment_len();
    let bank = transient_bank(cfg, sr)?;
    let sampler = SegmentSampler::new(pairs, segment, cfg.batch_size, cfg.seed)?;
    let mut log = LossLog::open(&out.join("mfnet_loss.jsonl"))?;
    let mut history = Vec::with_capacity(cfg.max_steps);
    let mut last = None;
    for step in 1..=cfg.max_steps {
        let segs = sampler.batch(step)?;
        let mut rng = sampler.step_rng(step, 1);
        let mut inputs = Vec::with_capacity(segs.len());
        for s in &segs {
            let mut x = s.input.clone();
            if m.transient_probability > 0.0 && rng.random_bool(m.transient_probability) {
                let t = bank.choose(&mut rng).expect("bank checked non-empty");
                let keep = t.len().min(segment / 2).max(1);
                let t = t.with_samples(t.samples()[..keep].to_vec())?;
                let snr = rng.random_range(m.transient_snr_db.min..=m.transient_snr_db.max);
                let seed = rng.next_u64();
                match inject_transient(&x, &t, snr, None, seed) {
                    Ok((y, info)) => {
                        log.record(step, "transient_snr_db", info.snr_db)?;
                        x = y;
                    }
                    Err(Error::Validation(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            inputs.push(x);
        }
        let refs: Vec<&Waveform> = inputs.iter().collect();
        let targets: Vec<&Waveform> = segs.iter().map(|s| &s.target).collect();
        let est = net.forward_batch(&net.prepare(&refs)?)?;
        let clean = stack_waves(&targets, dtype)?;
        let l_mr = mr.forward(&est, &clean)?;
        let l_w = waveform_loss(&est, &clean)?;
        let total = (l_mr.affine(m.mrstft_weight, 0.0)? + l_w.affine(m.wave_weight, 0.0)?)?;
        let values = [("mrstft", scalar(&l_mr)?), ("wave", scalar(&l_w)?), ("total", scalar(&total)?)];
        for (name, v) in &values {
            log.record(step, name, *v)?;
        }
        log.flush()?;
        if let Some((name, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { step, term: name.to_string() });
        }
        history.push(StepLosses::new(step, &values));
        opt.step(&total)?;
        if step % cfg.checkpoint_every == 0 || step == cfg.max_steps {
            let path = out.join(format!("mfnet_step{step:06}.safetensors"));
            let meta = save_mfnet(&ps, &m.model, step, gan_hash, &path)?;
            last = Some((path, meta));
        }
    }
    let (checkpoint, meta) = last.expect("final step always checkpoints");
    Ok(TrainSummary {
        stage: Stage::Mfnet,
        steps: cfg.max_steps,
        checkpoint,
        meta,
        log: log.path().to_path_buf(),
        history,
    })
}
