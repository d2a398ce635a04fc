//! The restoration generator and its multi-resolution discriminators on a
//! noisy clip: architecture summary, a forward pass and discriminator scores.

use candle_core::DType;
use ssi_core::degrade::mix_noise;
use ssi_core::dsp::synth;
use ssi_core::eval::si_sdr;
use ssi_core::gan::{DiscriminatorBank, DiscriminatorBankConfig, Generator, GeneratorConfig};
use ssi_core::nn::ParamStore;

fn main() -> ssi_core::Result<()> {
    let cfg = GeneratorConfig::desk();
    let mut ps = ParamStore::new(0, DType::F32);
    let gen = Generator::new(&mut ps, &cfg)?;
    let s = gen.structure();
    println!("generator: {} parameters", ps.count());
    println!("  encoder/decoder layers: {}/{}", s.encoder_layers, s.decoder_layers);
    println!("  dense dilations: {:?}", s.dense_blocks);
    println!("  S-TCM dilations: {:?}", s.s_tcm_groups);
    println!("  TF-LSTM blocks: {}", s.tf_lstm_blocks);
    println!("  frequency sizes through the encoder: {:?}", cfg.freq_sizes());

    let clean = synth::voiced_speech(3, 1.0, 48_000);
    let noisy = mix_noise(&clean, &synth::white_noise(4, clean.len(), 1.0, 48_000), 5.0)?;
    let restored = gen.restore(&noisy)?;
    println!(
        "untrained generator starts at the identity: SI-SDR in {:.2} dB, out {:.2} dB",
        si_sdr(&noisy, &clean)?,
        si_sdr(&restored, &clean)?
    );

    let mut dps = ParamStore::new(1, DType::F32);
    let bank = DiscriminatorBank::new(&mut dps, &DiscriminatorBankConfig::default())?;
    println!("discriminator bank: {} resolutions, {} parameters", bank.len(), dps.count());
    for (i, out) in bank.forward_wave(&clean, DType::F32)?.iter().enumerate() {
        let mean = out.score.mean_all()?.to_scalar::<f32>()?;
        println!("  resolution {i}: score map {:?}, mean {mean:.4}, {} feature maps", out.score.dims(), out.features.len());
    }
    Ok(())
}
