//! Build a small degraded corpus from synthetic sources with the default
//! recipe and show what was drawn for each utterance.

use ssi_core::degrade::{build_corpus, CorpusManifest, DegradationRecipe, ManifestRecord};
use ssi_core::dsp::{synth, write_wav};
use ssi_core::eval::si_sdr;
use ssi_core::degrade::load_pairs;

fn main() -> ssi_core::Result<()> {
    let dir = std::env::temp_dir().join("ssi-degrade-example");
    let src = dir.join("src");
    std::fs::create_dir_all(&src).map_err(|e| ssi_core::Error::io(&src, e))?;
    let sr = 48_000;
    let noise = src.join("noise.wav");
    write_wav(&noise, &synth::colored_noise(1, 2 * sr as usize, sr))?;
    let rir = src.join("rir.wav");
    write_wav(&rir, &synth::exponential_rir(2, 0.4, 0.5, sr))?;

    let mut records = Vec::new();
    for i in 0..6 {
        let clean = src.join(format!("utt{i}.wav"));
        write_wav(&clean, &synth::voiced_speech(10 + i, 1.0, sr))?;
        let mut r = ManifestRecord::new(format!("utt{i}"), clean);
        r.noises = vec![noise.clone()];
        r.rir = Some(rir.clone());
        records.push(r);
    }
    let manifest = CorpusManifest { records };

    let recipe = DegradationRecipe { seed: 7, ..DegradationRecipe::default() };
    let summary = build_corpus(&manifest, &recipe, &dir.join("corpus"), 2)?;
    println!("manifest: {}", summary.manifest_path.display());
    for (r, (_, degraded, clean)) in summary.manifest.records.iter().zip(load_pairs(&summary.manifest)?) {
        let realized = r.realized.as_ref().expect("built record");
        println!(
            "{}: SI-SDR {:6.2} dB, draw {}",
            r.id,
            si_sdr(&degraded, &clean)?,
            serde_json::to_string(realized)?
        );
    }
    Ok(())
}
