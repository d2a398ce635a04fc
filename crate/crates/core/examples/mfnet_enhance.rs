//! MF-Net on its own: ERB-domain coarse gains followed by low/high band
//! refinement, applied to speech with an injected transient.

use candle_core::DType;
use ssi_core::degrade::inject_transient;
use ssi_core::dsp::{mrstft_distance, synth};
use ssi_core::mfnet::{MfNet, MfNetConfig};
use ssi_core::nn::ParamStore;

fn main() -> ssi_core::Result<()> {
    let cfg = MfNetConfig::desk();
    let mut ps = ParamStore::new(0, DType::F32);
    let net = MfNet::new(&mut ps, &cfg)?;
    let (lo, hi) = cfg.bands();
    println!(
        "MF-Net: {} parameters, {} ERB bands, low band bins {:?}, high band bins {:?}",
        ps.count(),
        cfg.erb_bands,
        lo,
        hi
    );

    let clean = synth::voiced_speech(5, 1.0, 48_000);
    let burst = synth::transient_burst(6, 0.05, 48_000);
    let (noisy, t) = inject_transient(&clean, &burst, 0.0, None, 9)?;
    println!("transient at sample {} with local SNR {:.1} dB", t.position, t.snr_db);

    let (coarse, refined) = net.enhance_stages(&noisy)?;
    println!("MR-STFT to clean: input {:.4}", mrstft_distance(&noisy, &clean)?);
    println!("                  coarse {:.4}", mrstft_distance(&coarse, &clean)?);
    println!("                  refined {:.4}", mrstft_distance(&refined, &clean)?);
    println!("(identity-initialised weights: train with examples/train_desk.rs to move these)");
    Ok(())
}
