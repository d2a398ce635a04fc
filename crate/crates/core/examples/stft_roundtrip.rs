//! Analysis/synthesis round trip, subband stacking, ERB pooling and
//! magnitude compression on one second of synthetic speech.

use ssi_core::dsp::{
    compress, decompress, istft, make_erb_filterbank, merge_subbands, split_subbands, stft, synth, StftConfig,
    DEFAULT_COMPRESSION, DEFAULT_ERB_BANDS,
};

fn main() -> ssi_core::Result<()> {
    let cfg = StftConfig::full_band();
    let x = synth::voiced_speech(0, 1.0, cfg.sample_rate_hz);
    let spec = stft(&x, &cfg)?;
    println!(
        "{} samples -> {} frames x {} bins (win {}, hop {})",
        x.len(),
        spec.frames(),
        spec.bins(),
        cfg.win_len(),
        cfg.hop_len()
    );

    let y = istft(&spec, &cfg)?;
    let err = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
    println!("max round-trip error {err:.2e}");

    let (stack, nyquist) = split_subbands(&spec)?;
    let merged = merge_subbands(&stack, &nyquist)?;
    println!(
        "subband stack: {} channels x {} bins, edges {:?}, exact merge: {}",
        stack.channels(),
        stack.bins_per_band(),
        stack.band_edges(),
        merged.data() == spec.data()
    );

    let erb = make_erb_filterbank(DEFAULT_ERB_BANDS, &cfg)?;
    let frame: Vec<f64> = spec.frame(spec.frames() / 2).iter().map(|c| c.norm_sqr()).collect();
    let pooled = erb.apply(&frame)?;
    println!("{} ERB bands, centres {:.0}..{:.0} Hz", erb.n_bands(), erb.centers_hz()[0], erb.centers_hz()[erb.n_bands() - 1]);
    println!("band energies of the middle frame: {:.3?}", &pooled[..6]);

    let mags = spec.magnitudes();
    let c = compress(&mags, DEFAULT_COMPRESSION)?;
    let back = decompress(&c, DEFAULT_COMPRESSION)?;
    let worst = mags.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("compression exponent {DEFAULT_COMPRESSION}: inverse error {worst:.1e}");
    Ok(())
}
