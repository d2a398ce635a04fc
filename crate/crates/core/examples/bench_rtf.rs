//! Single-thread real-time factor of the full pipeline for both profiles.
//!
//! `cargo run --release --example bench_rtf -- [seconds] [repeats]`

use ssi_core::eval::{bench_rtf, Pipeline, REFERENCE_RTF_NRT, REFERENCE_RTF_RT};
use ssi_core::gan::GeneratorConfig;
use ssi_core::mfnet::MfNetConfig;

fn main() -> ssi_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seconds: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let repeats: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let profiles = [
        ("rt", GeneratorConfig::rt(), MfNetConfig::rt(), REFERENCE_RTF_RT),
        ("nrt", GeneratorConfig::nrt(), MfNetConfig::nrt(), REFERENCE_RTF_NRT),
    ];
    for (name, g, m, reference) in profiles {
        let p = Pipeline::from_configs(&g, &m, 0)?;
        let r = bench_rtf(&p, seconds, 1, repeats)?;
        println!(
            "{name:>3}: rtf {:.3}, runs {:.2?} s, {} thread (published {reference}, other hardware)",
            r.rtf, r.runs_s, r.threads
        );
    }
    Ok(())
}
