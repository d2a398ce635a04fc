//! Multi-resolution STFT distance: spectral convergence plus log-magnitude
//! L1, summed over resolutions. Shared by evaluation and training so both
//! report the same number.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::stft::hann;
use super::Waveform;
use crate::error::{Error, Result};

/// Added under the square root of every magnitude.
pub const MAG_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftResolution {
    pub fft: usize,
    pub hop: usize,
    pub win: usize,
}

impl StftResolution {
    /// Window equal to the FFT size with a quarter-length hop.
    pub const fn quarter_hop(fft: usize) -> Self {
        Self {
            fft,
            hop: fft / 4,
            win: fft,
        }
    }

    /// Window equal to the FFT size with a half-length hop.
    pub const fn half_hop(fft: usize) -> Self {
        Self {
            fft,
            hop: fft / 2,
            win: fft,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.win == 0 || self.win > self.fft {
            return Err(Error::config(format!("invalid STFT resolution {self:?}")));
        }
        Ok(())
    }

    /// Frames for an unpadded signal of `len` samples.
    pub fn frames(&self, len: usize) -> Result<usize> {
        if len < self.fft {
            return Err(Error::validation(format!(
                "signal of {len} samples shorter than FFT size {}",
                self.fft
            )));
        }
        Ok(1 + (len - self.fft) / self.hop)
    }

    pub fn bins(&self) -> usize {
        self.fft / 2 + 1
    }

    /// Periodic Hann of length `win`, centred in an `fft`-length frame.
    pub fn window(&self) -> Vec<f64> {
        let off = (self.fft - self.win) / 2;
        let mut w = vec![0.0; self.fft];
        for i in 0..self.win {
            w[off + i] = hann(i, self.win);
        }
        w
    }
}

pub const DEFAULT_RESOLUTIONS: [StftResolution; 3] = [
    StftResolution::quarter_hop(512),
    StftResolution::quarter_hop(1024),
    StftResolution::quarter_hop(2048),
];

/// Row-major `frames × bins` magnitudes with the `MAG_EPS` floor.
pub fn magnitudes(x: &[f64], res: &StftResolution) -> Result<Vec<f64>> {
    res.validate()?;
    let frames = res.frames(x.len())?;
    let w = res.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(res.fft);
    let bins = res.bins();
    let mut out = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); res.fft];
    for t in 0..frames {
        let seg = &x[t * res.hop..t * res.hop + res.fft];
        for ((b, &s), &wi) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex64::new(s * wi, 0.0);
        }
        fft.process(&mut buf);
        out.extend(buf[..bins].iter().map(|c| (c.norm_sqr() + MAG_EPS).sqrt()));
    }
    Ok(out)
}

/// Spectral convergence and mean log-magnitude distance at one resolution.
pub fn single_resolution(est: &[f64], reference: &[f64], res: &StftResolution) -> Result<(f64, f64)> {
    if est.len() != reference.len() {
        return Err(Error::validation(format!(
            "length mismatch: {} vs {}",
            est.len(),
            reference.len()
        )));
    }
    let e = magnitudes(est, res)?;
    let r = magnitudes(reference, res)?;
    let num: f64 = e.iter().zip(&r).map(|(a, b)| (b - a).powi(2)).sum();
    let den: f64 = r.iter().map(|b| b * b).sum();
    let sc = num.sqrt() / den.sqrt();
    let lm = e.iter().zip(&r).map(|(a, b)| (b.ln() - a.ln()).abs()).sum::<f64>() / e.len() as f64;
    Ok((sc, lm))
}

pub fn mrstft_distance_at(est: &[f64], reference: &[f64], resolutions: &[StftResolution]) -> Result<f64> {
    if resolutions.is_empty() {
        return Err(Error::config("at least one STFT resolution is required"));
    }
    let mut total = 0.0;
    for r in resolutions {
        let (sc, lm) = single_resolution(est, reference, r)?;
        total += sc + lm;
    }
    Ok(total)
}

/// Distance between two waveforms at the default resolutions.
pub fn mrstft_distance(est: &Waveform, reference: &Waveform) -> Result<f64> {
    est.ensure_same_rate(reference)?;
    let to64 = |w: &Waveform| w.samples().iter().map(|&s| s as f64).collect::<Vec<_>>();
    mrstft_distance_at(&to64(est), &to64(reference), &DEFAULT_RESOLUTIONS)
}
