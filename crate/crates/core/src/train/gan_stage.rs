//! Stage A: adversarial training of the restoration generator.

use candle_core::DType;

use super::checkpoint::save_gan;
use super::config::{Stage, TrainConfig};
use super::data::{stack_waves, SegmentSampler};
use super::log::LossLog;
use super::optim::Optimizer;
use super::{load_training_pairs, run_scoped, scalar, StepLosses, TrainSummary};
use crate::dsp::{StftResolution, Waveform};
use crate::error::{Error, Result};
use crate::gan::{discriminator_loss, generator_objective, DiscriminatorBank, Generator};
use crate::nn::{waveform_loss, MrStftLoss, ParamStore};

/// Names of the per-step terms, in log order.
pub const GAN_TERMS: [&str; 6] = ["mrstft", "wave", "g_adv", "fm", "g_total", "d_loss"];

/// Train from the corpus manifest named in `cfg`.
pub fn train_gan(cfg: &TrainConfig) -> Result<TrainSummary> {
    let pairs = load_training_pairs(&cfg.corpus)?;
    train_gan_with(cfg, pairs)
}

/// Train on in-memory `(degraded, clean)` pairs.
pub fn train_gan_with(cfg: &TrainConfig, pairs: Vec<(Waveform, Waveform)>) -> Result<TrainSummary> {
    if cfg.stage != Stage::Gan {
        return Err(Error::config("train_gan needs stage = gan"));
    }
    cfg.validate()?;
    let sr = cfg.gan.generator.stft.sample_rate_hz;
    if let Some((w, _)) = pairs.iter().find(|(w, _)| w.sample_rate() != sr) {
        return Err(Error::config(format!("corpus is at {} Hz, generator at {sr} Hz", w.sample_rate())));
    }
    run_scoped(cfg.deterministic, || run(cfg, pairs))
}

fn run(cfg: &TrainConfig, pairs: Vec<(Waveform, Waveform)>) -> Result<TrainSummary> {
    let dtype = DType::F32;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let g = &cfg.gan;
    let mut ps_g = ParamStore::new(cfg.seed, dtype);
    let gen = Generator::new(&mut ps_g, &g.generator)?;
    let mut ps_d = ParamStore::new(cfg.seed.wrapping_add(1), dtype);
    let bank = DiscriminatorBank::new(&mut ps_d, &g.discriminator)?;
    let mr = MrStftLoss::new(&g.mrstft_resolutions, dtype)?;
    let mut opt_g = Optimizer::new(ps_g.vars(), &cfg.optim)?;
    let mut opt_d = Optimizer::new(ps_d.vars(), &cfg.optim)?;
    let sampler = SegmentSampler::new(pairs, cfg.segment_len(), cfg.batch_size, cfg.seed)?;
    let mut log = LossLog::open(&out.join("gan_loss.jsonl"))?;
    let mut history = Vec::with_capacity(cfg.max_steps);
    let mut last = None;
    for step in 1..=cfg.max_steps {
        let segs = sampler.batch(step)?;
        let inputs: Vec<&Waveform> = segs.iter().map(|s| &s.input).collect();
        let targets: Vec<&Waveform> = segs.iter().map(|s| &s.target).collect();
        let sb = gen.prepare(&inputs, dtype)?;
        let clean = stack_waves(&targets, dtype)?;
        let adversarial = step > g.adv_warmup_steps;
        let est = gen.forward_batch(&sb)?;
        let mut d_loss = 0.0;
        if adversarial {
            let fake = est.detach();
            for _ in 0..g.d_steps_per_g {
                let d = discriminator_loss(&bank.forward(&clean)?, &bank.forward(&fake)?)?;
                d_loss = scalar(&d)?;
                if !d_loss.is_finite() {
                    log.flush()?;
                    return Err(Error::NonFinite { step, term: "d_loss".into() });
                }
                opt_d.step(&d)?;
            }
        }
        let terms = generator_objective(&est, &clean, &mr, &g.weights, adversarial.then_some(&bank))?;
        let mut values = terms.values()?;
        values.push(("d_loss", d_loss));
        let losses = StepLosses::new(step, &values);
        for (name, v) in &values {
            log.record(step, name, *v)?;
        }
        log.flush()?;
        if let Some((name, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { step, term: name.to_string() });
        }
        history.push(losses);
        opt_g.step(&terms.total)?;
        if step % cfg.checkpoint_every == 0 || step == cfg.max_steps {
            let path = out.join(format!("gan_step{step:06}.safetensors"));
            let meta = save_gan(&ps_g, &g.generator, step, &path)?;
            ps_d.save(&path.with_extension("disc.safetensors"))?;
            last = Some((path, meta));
        }
    }
    let (checkpoint, meta) = last.expect("final step always checkpoints");
    Ok(TrainSummary {
        stage: Stage::Gan,
        steps: cfg.max_steps,
        checkpoint,
        meta,
        log: log.path().to_path_buf(),
        history,
    })
}

/// Per-step `mrstft + wave`.
pub fn reconstruction_curve(summary: &TrainSummary) -> Vec<f64> {
    summary
        .history
        .iter()
        .map(|s| s.get("mrstft").unwrap_or(0.0) + s.get("wave").unwrap_or(0.0))
        .collect()
}

/// Mean `mrstft + wave` of `gen` over whole clips, the held-still
/// counterpart of [`reconstruction_curve`].
pub fn reconstruction_loss(
    gen: &Generator,
    pairs: &[(Waveform, Waveform)],
    resolutions: &[StftResolution],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("no clips to score"));
    }
    let mr = MrStftLoss::new(resolutions, DType::F32)?;
    let mut total = 0.0;
    for (input, target) in pairs {
        let est = stack_waves(&[&gen.restore(input)?], DType::F32)?;
        let clean = stack_waves(&[target], DType::F32)?;
        total += scalar(&mr.forward(&est, &clean)?)? + scalar(&waveform_loss(&est, &clean)?)?;
    }
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    use crate::train::fixtures;
    use crate::train::log::read_log;

    #[test]
    fn every_term_every_step_and_warmup_gates_adversarial_terms() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixtures::tiny(Stage::Gan, dir.path());
        let s = train_gan_with(&cfg, fixtures::pairs(3)).unwrap();
        let log = read_log(&s.log).unwrap();
        assert_eq!(log.len(), cfg.max_steps * GAN_TERMS.len());
        for step in 1..=cfg.max_steps {
            let terms: Vec<_> = log.iter().filter(|r| r.step == step).collect();
            let names: Vec<&str> = terms.iter().map(|r| r.term.as_str()).collect();
            assert_eq!(names, GAN_TERMS.to_vec());
            let adv = terms.iter().find(|r| r.term == "g_adv").unwrap().value;
            let d = terms.iter().find(|r| r.term == "d_loss").unwrap().value;
            if step <= cfg.gan.adv_warmup_steps {
                assert_eq!((adv, d), (0.0, 0.0));
            } else {
                assert!(adv > 0.0 && d > 0.0);
            }
        }
        assert!(dir.path().join("gan_step000003.safetensors").exists());
        assert_eq!(s.meta.step, 6);
    }

    #[test]
    fn whole_clip_loss_is_zero_for_an_identity_generator_on_clean_pairs() {
        let cfg = crate::gan::GeneratorConfig {
            zero_init_head: true,
            ..crate::gan::GeneratorConfig::tiny()
        };
        let mut ps = ParamStore::new(0, DType::F32);
        let gen = Generator::new(&mut ps, &cfg).unwrap();
        let res = fixtures::tiny(Stage::Gan, Path::new(".")).gan.mrstft_resolutions;
        let noisy = fixtures::pairs(3);
        let clean: Vec<_> = noisy.iter().map(|(_, c)| (c.clone(), c.clone())).collect();
        assert!(reconstruction_loss(&gen, &clean, &res).unwrap() < 1e-3);
        assert!(reconstruction_loss(&gen, &noisy, &res).unwrap() > 0.1);
        assert!(reconstruction_loss(&gen, &[], &res).is_err());
    }

    #[test]
    fn same_seed_same_run() {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let cfg = fixtures::tiny(Stage::Gan, dir.path());
                let s = train_gan_with(&cfg, fixtures::pairs(3)).unwrap();
                (s.history.clone(), s.meta.weights_hash.clone())
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
    }

    #[test]
    fn divergence_aborts_and_keeps_the_last_good_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fixtures::tiny(Stage::Gan, dir.path());
        cfg.checkpoint_every = 1;
        cfg.max_steps = 50;
        cfg.optim.lr = 1e30;
        cfg.optim.grad_clip = 0.0;
        match train_gan_with(&cfg, fixtures::pairs(2)) {
            Err(Error::NonFinite { step, .. }) => {
                assert!(step > 1);
                let good = dir.path().join(format!("gan_step{:06}.safetensors", step - 1));
                crate::train::load_gan(&good, DType::F32).unwrap();
                assert!(!dir.path().join(format!("gan_step{step:06}.safetensors")).exists());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rate_mismatch_and_wrong_stage_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixtures::tiny(Stage::Gan, dir.path());
        let wrong: Vec<_> = fixtures::pairs(1)
            .into_iter()
            .map(|(a, b)| {
                let r = |w: &Waveform| Waveform::new(w.samples().to_vec(), 2400).unwrap();
                (r(&a), r(&b))
            })
            .collect();
        assert!(matches!(train_gan_with(&cfg, wrong), Err(Error::Config(_))));
        let m = fixtures::tiny(Stage::Mfnet, dir.path());
        assert!(matches!(train_gan_with(&m, fixtures::pairs(1)), Err(Error::Config(_))));
        assert!(matches!(train_gan_with(&cfg, vec![]), Err(Error::Config(_))));
    }
}
