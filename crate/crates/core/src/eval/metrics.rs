//! Objective quality metrics.

use serde::{Deserialize, Serialize};

use crate::dsp::{stft, StftConfig, Waveform};
use crate::error::{Error, Result};

pub use crate::dsp::mrstft_distance;

pub const SI_SDR_CAP_DB: f64 = 100.0;
const LSD_POWER_FLOOR: f64 = 1e-10;

fn check_pair(est: &Waveform, reference: &Waveform) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::validation(format!(
            "length mismatch: {} vs {} samples",
            est.len(),
            reference.len()
        )));
    }
    est.ensure_same_rate(reference)
}

/// Scale-invariant SDR in dB, capped at [`SI_SDR_CAP_DB`].
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    check_pair(est, reference)?;
    let n = est.len() as f64;
    let me = est.samples().iter().map(|&v| v as f64).sum::<f64>() / n;
    let mr = reference.samples().iter().map(|&v| v as f64).sum::<f64>() / n;
    let e: Vec<f64> = est.samples().iter().map(|&v| v as f64 - me).collect();
    let r: Vec<f64> = reference.samples().iter().map(|&v| v as f64 - mr).collect();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr <= 0.0 {
        return Err(Error::validation("reference has zero power"));
    }
    let alpha = e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = alpha * alpha * rr;
    let noise: f64 = e.iter().zip(&r).map(|(a, b)| (a - alpha * b).powi(2)).sum();
    if noise <= 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / noise).log10()).min(SI_SDR_CAP_DB))
}

/// Log-spectral distance in dB: per-frame RMS of the power-ratio in dB,
/// averaged over frames.
pub fn lsd(est: &Waveform, reference: &Waveform) -> Result<f64> {
    check_pair(est, reference)?;
    let cfg = StftConfig::with_rate(est.sample_rate())?;
    let e = stft(est, &cfg)?;
    let r = stft(reference, &cfg)?;
    let mut total = 0.0;
    for t in 0..e.frames() {
        let ms: f64 = e
            .frame(t)
            .iter()
            .zip(r.frame(t))
            .map(|(a, b)| {
                let pa = a.norm_sqr() + LSD_POWER_FLOOR;
                let pb = b.norm_sqr() + LSD_POWER_FLOOR;
                (10.0 * (pb / pa).log10()).powi(2)
            })
            .sum::<f64>()
            / e.bins() as f64;
        total += ms.sqrt();
    }
    Ok(total / e.frames() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileMetrics {
    pub id: String,
    pub si_sdr_db: f64,
    pub lsd_db: f64,
    pub mrstft: f64,
}

pub fn compute_metrics(id: &str, est: &Waveform, reference: &Waveform) -> Result<FileMetrics> {
    Ok(FileMetrics {
        id: id.to_string(),
        si_sdr_db: si_sdr(est, reference)?,
        lsd_db: lsd(est, reference)?,
        mrstft: mrstft_distance(est, reference)?,
    })
}
