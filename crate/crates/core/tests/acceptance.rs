//! End-to-end acceptance run: one PASS/FAIL line per criterion, exit status
//! non-zero when any fails.

use std::path::Path;
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssi_core::degrade::{
    build_corpus, drop_packets, inject_transient, lowpass, mix_noise, CorpusManifest, DegradationRecipe,
    ManifestRecord, TRANSIENT_SNR_RANGE_DB,
};
use ssi_core::dsp::{
    istft, merge_subbands, mrstft_distance, split_subbands, stft, synth, write_wav, StftConfig, StftResolution,
    Waveform,
};
use ssi_core::eval::{bench_rtf, report_profiles, si_sdr, Pipeline, REFERENCE_RTF_NRT, REFERENCE_RTF_RT};
use ssi_core::gan::{
    discriminator_loss, feature_match_loss, generator_adv_loss, generator_objective, DiscOutput,
    DiscriminatorBank, DiscriminatorBankConfig, Generator, GeneratorConfig, LossWeights,
};
use ssi_core::mfnet::{MfNet, MfNetConfig};
use ssi_core::nn::{check_gradients, waveform_loss, MrStftLoss, ParamStore};
use ssi_core::train::{
    load_gan, reconstruction_loss, train_gan_with, train_mfnet_with, Stage, TrainConfig,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn diff(a: &[f32], b: &[f32]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x as f64 - y as f64).collect()
}

fn row(w: &Waveform) -> Tensor {
    let v: Vec<f64> = w.samples().iter().map(|&s| s as f64).collect();
    Tensor::from_vec(v, (1, w.len()), &Device::Cpu).expect("row tensor")
}

fn dsp_round_trip() -> Outcome {
    let t = Instant::now();
    let cfg = StftConfig::full_band();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..100 {
        let s: Vec<f32> = (0..48_000).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let w = Waveform::new(s, 48_000).map_err(err)?;
        let spec = stft(&w, &cfg).map_err(err)?;
        let back = istft(&spec, &cfg).map_err(err)?;
        worst = diff(back.samples(), w.samples()).iter().fold(worst, |m, d| m.max(d.abs()));
        let (stack, nyq) = split_subbands(&spec).map_err(err)?;
        exact &= merge_subbands(&stack, &nyq).map_err(err)?.data() == spec.data();
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst < 1e-6 && exact && secs < 60.0,
        format!("max error {worst:.2e}, subband merge exact {exact}, {secs:.1} s"),
    )
}

fn degradation_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut snr_err = 0.0f64;
    for i in 0..100 {
        let clean = synth::voiced_speech(i, 0.5, 16_000);
        let noise = synth::colored_noise(1000 + i, 4000, 16_000);
        let snr = rng.random_range(-5.0..30.0);
        let noisy = mix_noise(&clean, &noise, snr).map_err(err)?;
        let n = diff(noisy.samples(), clean.samples());
        let c: Vec<f64> = clean.samples().iter().map(|&v| v as f64).collect();
        let realized = 10.0 * (power(&c) / power(&n)).log10();
        snr_err = snr_err.max((realized - snr).abs());
    }

    let (lo, hi) = TRANSIENT_SNR_RANGE_DB;
    let mut tr_err = 0.0f64;
    let mut inside = true;
    for i in 0..100 {
        let x = synth::white_noise(i, 8000, 0.2, 16_000);
        let burst = synth::transient_burst(500 + i, 0.03, 16_000);
        let snr = rng.random_range(lo..=hi);
        let (y, info) = inject_transient(&x, &burst, snr, None, i).map_err(err)?;
        inside &= (lo..=hi).contains(&info.snr_db);
        let span = info.position..info.position + burst.len();
        let local: Vec<f64> = x.samples()[span.clone()].iter().map(|&v| v as f64).collect();
        let added = diff(&y.samples()[span.clone()], &x.samples()[span]);
        tr_err = tr_err.max((10.0 * (power(&local) / power(&added)).log10() - snr).abs());
    }
    let x = synth::white_noise(0, 8000, 0.2, 16_000);
    let burst = synth::transient_burst(0, 0.03, 16_000);
    inside &= inject_transient(&x, &burst, hi + 0.5, None, 0).is_err();
    inside &= inject_transient(&x, &burst, lo - 0.5, None, 0).is_err();

    let p = 0.1;
    let long = Waveform::zeros(20 * 48_000, 48_000).map_err(err)?;
    let (_, mask) = drop_packets(&long, 20.0, p, 9).map_err(err)?;
    let n = mask.len() as f64;
    let lost = mask.iter().filter(|&&m| m).count() as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    let loss_ok = (lost - n * p).abs() <= 3.0 * sigma;

    let dir = tempfile::tempdir().map_err(err)?;
    let mut manifest = CorpusManifest::default();
    for i in 0..4 {
        let path = dir.path().join(format!("c{i}.wav"));
        write_wav(&path, &synth::voiced_speech(i, 0.3, 48_000)).map_err(err)?;
        manifest.records.push(ManifestRecord::new(format!("u{i}"), path));
    }
    let built = build_corpus(&manifest, &DegradationRecipe::passthrough(3), &dir.path().join("out"), 1).map_err(err)?;
    let mut identical = true;
    for r in &built.manifest.records {
        let a = std::fs::read(r.degraded_out.as_ref().expect("built")).map_err(err)?;
        let b = std::fs::read(r.clean_out.as_ref().expect("built")).map_err(err)?;
        identical &= a == b && r.realized.as_ref().is_some_and(|d| d.is_identity());
    }

    check(
        snr_err < 0.01 && tr_err < 0.1 && inside && loss_ok && identical,
        format!(
            "SNR error {snr_err:.1e} dB, transient error {tr_err:.1e} dB, range enforced {inside}, \
             {lost} of {n} packets lost (expected {:.0} ± {:.0}), zero recipe identical {identical}",
            n * p,
            3.0 * sigma
        ),
    )
}

fn tiny_pairs() -> Vec<(Waveform, Waveform)> {
    (0..4)
        .map(|i| {
            let clean = synth::sine(100.0 + 40.0 * i as f64, 0.4, 360, 1200);
            let noise = synth::white_noise(i, 360, 0.1, 1200);
            (mix_noise(&clean, &noise, 10.0).expect("mix"), clean)
        })
        .collect()
}

fn determinism_once(root: &Path) -> Result<(Vec<u8>, f64, Vec<f32>), String> {
    let src = root.join("src");
    std::fs::create_dir_all(&src).map_err(err)?;
    let mut manifest = CorpusManifest::default();
    for i in 0..3 {
        let c = src.join(format!("c{i}.wav"));
        let n = src.join(format!("n{i}.wav"));
        write_wav(&c, &synth::voiced_speech(i, 0.4, 48_000)).map_err(err)?;
        write_wav(&n, &synth::colored_noise(i, 9600, 48_000)).map_err(err)?;
        let mut r = ManifestRecord::new(format!("u{i}"), c);
        r.noises.push(n);
        manifest.records.push(r);
    }
    let recipe = DegradationRecipe {
        seed: 17,
        ..DegradationRecipe::default()
    };
    let built = build_corpus(&manifest, &recipe, &root.join("corpus"), 2).map_err(err)?;
    let mut corpus = std::fs::read(&built.manifest_path).map_err(err)?;
    let root_s = root.to_string_lossy().to_string();
    corpus = String::from_utf8_lossy(&corpus).replace(&root_s, "").into_bytes();
    for r in &built.manifest.records {
        corpus.extend(std::fs::read(r.degraded_out.as_ref().expect("built")).map_err(err)?);
    }

    let mut g = TrainConfig::tiny(Stage::Gan);
    g.out_dir = root.join("gan");
    g.max_steps = 100;
    g.checkpoint_every = 100;
    let gs = train_gan_with(&g, tiny_pairs()).map_err(err)?;
    let loss = gs.history.last().and_then(|h| h.get("g_total")).ok_or("no loss")?;

    let gan = load_gan(&gs.checkpoint, DType::F32).map_err(err)?;
    let mut m = TrainConfig::tiny(Stage::Mfnet);
    m.out_dir = root.join("mfnet");
    m.max_steps = 5;
    let ms = train_mfnet_with(&m, &gan, tiny_pairs()).map_err(err)?;
    let p = Pipeline::load(&gs.checkpoint, &ms.checkpoint, false).map_err(err)?;
    let out = p.enhance(&tiny_pairs()[1].0).map_err(err)?;
    Ok((corpus, loss, out.samples().to_vec()))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let (ca, la, ea) = determinism_once(a.path())?;
    let (cb, lb, eb) = determinism_once(b.path())?;
    let corpus = ca == cb;
    let loss = la.to_bits() == lb.to_bits();
    let enhance = ea.iter().zip(&eb).all(|(x, y)| x.to_bits() == y.to_bits()) && ea.len() == eb.len();
    check(
        corpus && loss && enhance,
        format!("corpus identical {corpus}, step-100 loss {la:.6} identical {loss}, enhance identical {enhance}"),
    )
}

fn structure() -> Outcome {
    let mut ps = ParamStore::new(0, DType::F32);
    let cfg = GeneratorConfig::rt();
    let s = Generator::new(&mut ps, &cfg).map_err(err)?.structure();
    let bank = DiscriminatorBank::new(&mut ps, &TrainConfig::default().gan.discriminator).map_err(err)?;
    let dense_ok = s.dense_blocks.iter().all(|b| b.len() == 5);
    let tcm_ok = s.s_tcm_groups.len() == 5
        && s.s_tcm_groups.iter().all(|g| *g == (0..4).map(|k| cfg.dilation_base.pow(k)).collect::<Vec<_>>());
    check(
        s.encoder_layers == 5 && s.decoder_layers == 5 && dense_ok && tcm_ok && s.tf_lstm_blocks == 2 && bank.len() >= 2,
        format!(
            "encoder {}, decoder {}, dense {:?}, S-TCM {:?}, TF-LSTM {}, discriminator resolutions {}",
            s.encoder_layers,
            s.decoder_layers,
            s.dense_blocks,
            s.s_tcm_groups,
            s.tf_lstm_blocks,
            bank.len()
        ),
    )
}

fn parameters() -> Outcome {
    let r = report_profiles().map_err(err)?;
    let (rt, nrt) = (&r[0], &r[1]);
    let dev = |p: &ssi_core::eval::ParamReport| p.deviation_pct().unwrap_or(f64::INFINITY);
    check(
        dev(rt).abs() <= 20.0 && dev(nrt).abs() <= 20.0 && nrt.total > rt.total,
        format!(
            "rt {:.2} M ({:+.1}% of 15.64 M), nrt {:.2} M ({:+.1}% of 19.15 M)",
            rt.total_m(),
            dev(rt),
            nrt.total_m(),
            dev(nrt)
        ),
    )
}

fn causality() -> Outcome {
    let g = GeneratorConfig {
        zero_init_head: false,
        ..GeneratorConfig::rt()
    };
    let m = MfNetConfig {
        identity_init: false,
        ..MfNetConfig::rt()
    };
    let p = Pipeline::from_configs(&g, &m, 4).map_err(err)?;
    let hop = g.stft.hop_len();
    let x = synth::white_noise(4, 40 * hop, 0.3, 48_000);
    let base = p.enhance(&x).map_err(err)?;
    let t = 20;
    let mut s = x.samples().to_vec();
    for v in &mut s[(t + 3) * hop..] {
        *v = 0.5 - *v;
    }
    let pert = p.enhance(&x.with_samples(s).map_err(err)?).map_err(err)?;
    let keep = (t + 1) * hop;
    let past = diff(&base.samples()[..keep], &pert.samples()[..keep]).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let future = diff(&base.samples()[keep..], &pert.samples()[keep..]).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    check(
        past < 1e-6 && future > 1e-6,
        format!("max change before frame {t}: {past:.1e}; after: {future:.1e}"),
    )
}

fn gradients() -> Outcome {
    let res = [StftResolution::quarter_hop(16), StftResolution::quarter_hop(32)];
    let noisy = synth::white_noise(5, 84, 0.3, 1200);
    let clean = row(&synth::sine(150.0, 0.5, 84, 1200));
    let mr = MrStftLoss::new(&res, DType::F64).map_err(err)?;

    let mut ps = ParamStore::new(11, DType::F64);
    let g = Generator::new(&mut ps, &GeneratorConfig::tiny()).map_err(err)?;
    let bank = DiscriminatorBank::new(
        &mut ps,
        &DiscriminatorBankConfig {
            resolutions: res.to_vec(),
            channels: 2,
            strided_layers: 1,
            ..Default::default()
        },
    )
    .map_err(err)?;
    let batch = g.prepare(&[&noisy], DType::F64).map_err(err)?;
    let weights = LossWeights::default();
    let gen = check_gradients(&ps, "gen.", 10, 1e-6, 3, || {
        let est = g.forward_batch(&batch)?;
        Ok(generator_objective(&est, &clean, &mr, &weights, Some(&bank))?.total)
    })
    .map_err(err)?;

    let mut ps = ParamStore::new(12, DType::F64);
    let m = MfNet::new(&mut ps, &MfNetConfig::tiny()).map_err(err)?;
    let batch = m.prepare(&[&noisy]).map_err(err)?;
    let mf = check_gradients(&ps, "mfnet.", 10, 1e-6, 5, || {
        let est = m.forward_batch(&batch)?;
        Ok((mr.forward(&est, &clean)? + waveform_loss(&est, &clean)?)?)
    })
    .map_err(err)?;

    let worst = |s: &[ssi_core::nn::GradSample]| s.iter().map(|x| x.rel_error()).fold(0.0, f64::max);
    let (wg, wm) = (worst(&gen), worst(&mf));
    check(
        gen.len() == 10 && mf.len() == 10 && wg < 1e-3 && wm < 1e-3,
        format!("worst relative error: generator {wg:.1e}, MF-Net {wm:.1e} (10 parameters each)"),
    )
}

fn loss_optima() -> Outcome {
    let d = Device::Cpu;
    let x = row(&synth::voiced_speech(1, 0.1, 16_000));
    let mr = MrStftLoss::new(&[StftResolution::quarter_hop(64), StftResolution::quarter_hop(256)], DType::F64)
        .map_err(err)?;
    let scalar = |t: Tensor| -> Result<f64, String> { t.to_scalar::<f64>().map_err(err) };
    let out = |score: f64, feat: f64| -> Result<DiscOutput, String> {
        Ok(DiscOutput {
            score: Tensor::full(score, (1, 4, 3, 1), &d).map_err(err)?,
            features: vec![Tensor::full(feat, (1, 4, 3, 2), &d).map_err(err)?],
        })
    };
    let real = vec![out(1.0, 0.3)?, out(1.0, -0.7)?];
    let fake = vec![out(0.0, 0.3)?, out(0.0, -0.7)?];
    let values = [
        ("mrstft", scalar(mr.forward(&x, &x).map_err(err)?)?),
        ("waveform", scalar(waveform_loss(&x, &x).map_err(err)?)?),
        ("feature match", scalar(feature_match_loss(&real, &real).map_err(err)?)?),
        ("D at optimum", scalar(discriminator_loss(&real, &fake).map_err(err)?)?),
        ("G at optimum", scalar(generator_adv_loss(&real).map_err(err)?)?),
    ];
    let worst = values.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let text: Vec<String> = values.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    check(worst <= 1e-7, text.join(", "))
}

fn overfit_set() -> Vec<(Waveform, Waveform)> {
    (0..8)
        .map(|i| {
            let clean = synth::voiced_speech(i, 1.0, 48_000);
            let noise = synth::white_noise(100 + i, clean.len(), 1.0, 48_000);
            let noisy = mix_noise(&clean, &noise, 5.0).expect("mix");
            let degraded = if i % 2 == 0 { lowpass(&noisy, 8000.0).expect("lowpass") } else { noisy };
            (degraded, clean)
        })
        .collect()
}

fn desk_learning() -> Outcome {
    let t = Instant::now();
    let pairs = overfit_set();
    let dir = tempfile::tempdir().map_err(err)?;
    let mut g = TrainConfig::desk(Stage::Gan);
    g.out_dir = dir.path().join("gan");
    let res = g.gan.mrstft_resolutions.clone();
    let mut init = ParamStore::new(g.seed, DType::F32);
    let start = reconstruction_loss(&Generator::new(&mut init, &g.gan.generator).map_err(err)?, &pairs, &res)
        .map_err(err)?;
    let gs = train_gan_with(&g, pairs.clone()).map_err(err)?;
    let gan = load_gan(&gs.checkpoint, DType::F32).map_err(err)?;
    let end = reconstruction_loss(&gan.model, &pairs, &res).map_err(err)?;
    let drop = 1.0 - end / start;

    let mut m = TrainConfig::desk(Stage::Mfnet);
    m.out_dir = dir.path().join("mfnet");
    let ms = train_mfnet_with(&m, &gan, pairs.clone()).map_err(err)?;
    let p = Pipeline::load(&gs.checkpoint, &ms.checkpoint, false).map_err(err)?;

    let (mut before, mut after, mut gan_only, mut both) = (vec![], vec![], vec![], vec![]);
    for (i, (degraded, clean)) in pairs.iter().enumerate() {
        before.push(si_sdr(degraded, clean).map_err(err)?);
        after.push(si_sdr(&p.enhance(degraded).map_err(err)?, clean).map_err(err)?);
        let restored = p.generator().restore(degraded).map_err(err)?;
        let burst = synth::transient_burst(7000 + i as u64, 0.05, 48_000);
        let (hit, _) = inject_transient(&restored, &burst, 0.0, None, i as u64).map_err(err)?;
        gan_only.push(mrstft_distance(&hit, clean).map_err(err)?);
        both.push(mrstft_distance(&p.mfnet().enhance(&hit).map_err(err)?, clean).map_err(err)?);
    }
    let (b, a, go, bo) = (mean(&before), mean(&after), mean(&gan_only), mean(&both));
    let mins = t.elapsed().as_secs_f64() / 60.0;
    check(
        drop >= 0.5 && gs.steps <= 500 && mins < 30.0 && a > b && bo < go,
        format!(
            "reconstruction loss on the 8 clips {start:.2} -> {end:.2} ({:.0}% drop in {} steps); SI-SDR {b:.2} -> {a:.2} dB; \
             MR-STFT with transient: GAN only {go:.3}, with MF-Net {bo:.3}; {mins:.1} min",
            100.0 * drop,
            gs.steps
        ),
    )
}

fn rtf() -> Outcome {
    let rt = Pipeline::from_configs(&GeneratorConfig::rt(), &MfNetConfig::rt(), 0).map_err(err)?;
    let nrt = Pipeline::from_configs(&GeneratorConfig::nrt(), &MfNetConfig::nrt(), 0).map_err(err)?;
    let a = bench_rtf(&rt, 10.0, 1, 3).map_err(err)?;
    let b = bench_rtf(&nrt, 10.0, 1, 3).map_err(err)?;
    let valid = [&a, &b].iter().all(|r| r.rtf.is_finite() && r.rtf > 0.0 && r.threads == 1);
    check(
        valid && b.rtf >= a.rtf,
        format!(
            "rt {:.3}, nrt {:.3} on one thread (published {REFERENCE_RTF_RT} / {REFERENCE_RTF_NRT} \
             on other hardware, not binding)",
            a.rtf, b.rtf
        ),
    )
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 10] = [
        ("DSP round trip", dsp_round_trip),
        ("degradation fidelity", degradation_fidelity),
        ("determinism", determinism),
        ("structural conformance", structure),
        ("parameter accounting", parameters),
        ("causality", causality),
        ("gradient checks", gradients),
        ("loss optima", loss_optima),
        ("desk-scale learning", desk_learning),
        ("RTF harness", rtf),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        match f() {
            Ok(d) => println!("PASS criterion {n} ({name}): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
