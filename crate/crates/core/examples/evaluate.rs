//! Score a handful of noisy clips and print the metrics report as JSON and
//! CSV.

use ssi_core::degrade::mix_noise;
use ssi_core::dsp::synth;
use ssi_core::eval::{score_all, MetricsReport, RuntimeMeta};

fn main() -> ssi_core::Result<()> {
    let items = [0.0, 5.0, 10.0, 20.0]
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let clean = synth::voiced_speech(i as u64, 1.0, 48_000);
            let noise = synth::white_noise(100 + i as u64, clean.len(), 1.0, 48_000);
            Ok((format!("snr{snr:02.0}"), mix_noise(&clean, &noise, snr)?, clean))
        })
        .collect::<ssi_core::Result<Vec<_>>>()?;
    let report = MetricsReport::new(score_all(&items)?, None, RuntimeMeta::here(0.0));
    println!("{}", report.to_json()?);
    println!("{}", report.to_csv());
    Ok(())
}
