//! Desk-scale run of both stages on an 8-clip overfit set.
//!
//! ```text
//! cargo run --release --example train_desk [gan_steps] [mfnet_steps]
//! ```

use std::time::Instant;

use candle_core::DType;
use ssi_core::degrade::{inject_transient, lowpass, mix_noise};
use ssi_core::dsp::{mrstft_distance, synth, Waveform};
use ssi_core::eval::{si_sdr, Pipeline};
use ssi_core::gan::Generator;
use ssi_core::nn::ParamStore;
use ssi_core::train::{load_gan, reconstruction_loss, train_gan_with, train_mfnet_with, Stage, TrainConfig};

const SR: u32 = 48_000;

fn overfit_set() -> Vec<(Waveform, Waveform)> {
    (0..8)
        .map(|i| {
            let clean = synth::voiced_speech(i, 1.0, SR);
            let noise = synth::white_noise(100 + i, clean.len(), 1.0, SR);
            let noisy = mix_noise(&clean, &noise, 5.0).unwrap();
            let degraded = if i % 2 == 0 { lowpass(&noisy, 8000.0).unwrap() } else { noisy };
            (degraded, clean)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> ssi_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let gan_steps: usize = args.next().map_or(500, |s| s.parse().expect("gan steps"));
    let mf_steps: usize = args.next().map_or(200, |s| s.parse().expect("mfnet steps"));
    let pairs = overfit_set();
    let dir = tempfile::tempdir().expect("temp dir");

    let mut gcfg = TrainConfig::desk(Stage::Gan);
    gcfg.out_dir = dir.path().join("gan");
    gcfg.max_steps = gan_steps;
    gcfg.gan.adv_warmup_steps = gcfg.gan.adv_warmup_steps.min(gan_steps * 3 / 5);
    let res = gcfg.gan.mrstft_resolutions.clone();
    let mut init = ParamStore::new(gcfg.seed, DType::F32);
    let start = reconstruction_loss(&Generator::new(&mut init, &gcfg.gan.generator)?, &pairs, &res)?;
    let t = Instant::now();
    let gs = train_gan_with(&gcfg, pairs.clone())?;
    let gan = load_gan(&gs.checkpoint, DType::F32)?;
    let end = reconstruction_loss(&gan.model, &pairs, &res)?;
    println!(
        "gan: {gan_steps} steps in {:.0} s, reconstruction {start:.3} -> {end:.3} ({:.0}% drop)",
        t.elapsed().as_secs_f64(),
        100.0 * (1.0 - end / start)
    );

    let mut mcfg = TrainConfig::desk(Stage::Mfnet);
    mcfg.out_dir = dir.path().join("mfnet");
    mcfg.max_steps = mf_steps;
    let t = Instant::now();
    let ms = train_mfnet_with(&mcfg, &gan, pairs.clone())?;
    println!("mfnet: {mf_steps} steps in {:.0} s", t.elapsed().as_secs_f64());

    let p = Pipeline::load(&gs.checkpoint, &ms.checkpoint, false)?;
    let (mut before, mut after, mut gan_only, mut both) = (vec![], vec![], vec![], vec![]);
    for (i, (degraded, clean)) in pairs.iter().enumerate() {
        before.push(si_sdr(degraded, clean)?);
        after.push(si_sdr(&p.enhance(degraded)?, clean)?);
        let restored = p.generator().restore(degraded)?;
        let burst = synth::transient_burst(7000 + i as u64, 0.05, SR);
        let (hit, _) = inject_transient(&restored, &burst, 0.0, None, i as u64)?;
        gan_only.push(mrstft_distance(&hit, clean)?);
        both.push(mrstft_distance(&p.mfnet().enhance(&hit)?, clean)?);
    }
    println!("si-sdr: degraded {:.2} dB, enhanced {:.2} dB", mean(&before), mean(&after));
    println!("mr-stft with transient: gan only {:.3}, gan + mfnet {:.3}", mean(&gan_only), mean(&both));
    Ok(())
}
