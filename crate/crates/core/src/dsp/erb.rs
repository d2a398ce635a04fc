//! Triangular filterbank with centers equally spaced on the ERB-rate scale.

use super::stft::StftConfig;
use crate::error::{Error, Result};

pub const DEFAULT_ERB_BANDS: usize = 64;

/// ERB-rate (in ERB numbers) of a frequency in Hz.
pub fn hz_to_erb_rate(hz: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * hz).log10()
}

pub fn erb_rate_to_hz(erb: f64) -> f64 {
    (10f64.powf(erb / 21.4) - 1.0) / 0.00437
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErbFilterbank {
    n_bands: usize,
    bins: usize,
    /// Row-major `n_bands × bins`; each row sums to one.
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
}

impl ErbFilterbank {
    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.bins..(band + 1) * self.bins]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Band values for one frame of linear-bin values.
    pub fn apply(&self, spectrum: &[f64]) -> Result<Vec<f64>> {
        if spectrum.len() != self.bins {
            return Err(Error::validation(format!(
                "filterbank expects {} bins, got {}",
                self.bins,
                spectrum.len()
            )));
        }
        Ok((0..self.n_bands)
            .map(|b| self.row(b).iter().zip(spectrum).map(|(w, x)| w * x).sum())
            .collect())
    }

    /// Row-major `bins × n_bands` expansion matrix: the transposed filterbank
    /// with every bin's row renormalized to sum one, so unity band gains
    /// expand to unity bin gains.
    pub fn expansion_matrix(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.bins * self.n_bands];
        for f in 0..self.bins {
            let col_sum: f64 = (0..self.n_bands).map(|b| self.row(b)[f]).sum();
            for b in 0..self.n_bands {
                m[f * self.n_bands + b] = self.row(b)[f] / col_sum;
            }
        }
        m
    }

    /// Expand per-band gains to per-bin gains.
    pub fn expand(&self, band_gains: &[f64]) -> Result<Vec<f64>> {
        if band_gains.len() != self.n_bands {
            return Err(Error::validation(format!(
                "expected {} band gains, got {}",
                self.n_bands,
                band_gains.len()
            )));
        }
        let m = self.expansion_matrix();
        Ok((0..self.bins)
            .map(|f| {
                m[f * self.n_bands..(f + 1) * self.n_bands]
                    .iter()
                    .zip(band_gains)
                    .map(|(a, g)| a * g)
                    .sum()
            })
            .collect())
    }
}

/// Build an `n_bands × F` triangular ERB filterbank.
///
/// Centers run from 0 Hz to Nyquist in equal ERB-rate steps. A triangle's
/// slope on each side reaches zero at the neighbouring center, but never
/// narrower than one bin, so low bands that are closer together than the bin
/// spacing still capture their nearest bin.
pub fn make_erb_filterbank(n_bands: usize, cfg: &StftConfig) -> Result<ErbFilterbank> {
    cfg.validate()?;
    let bins = cfg.num_bins();
    if n_bands < 2 || n_bands >= bins {
        return Err(Error::config(format!(
            "ERB band count must satisfy 2 <= n_bands < {bins}, got {n_bands}"
        )));
    }
    let top = hz_to_erb_rate(cfg.nyquist_hz());
    let centers_hz: Vec<f64> = (0..n_bands)
        .map(|b| erb_rate_to_hz(top * b as f64 / (n_bands - 1) as f64))
        .collect();
    let df = cfg.bin_hz();
    let mut weights = vec![0.0; n_bands * bins];
    for b in 0..n_bands {
        let c = centers_hz[b];
        let left = if b == 0 { df } else { (c - centers_hz[b - 1]).max(df) };
        let right = if b + 1 == n_bands {
            df
        } else {
            (centers_hz[b + 1] - c).max(df)
        };
        let row = &mut weights[b * bins..(b + 1) * bins];
        for (f, w) in row.iter_mut().enumerate() {
            let hz = f as f64 * df;
            *w = if hz <= c {
                (1.0 - (c - hz) / left).max(0.0)
            } else {
                (1.0 - (hz - c) / right).max(0.0)
            };
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= sum);
    }
    Ok(ErbFilterbank {
        n_bands,
        bins,
        weights,
        centers_hz,
    })
}
