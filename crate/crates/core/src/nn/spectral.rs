//! Differentiable spectral operations: inverse STFT matching
//! [`crate::dsp::StftProcessor::synthesize`], magnitude STFT for losses and
//! discriminators, and power-law compression of complex spectra.

use std::f64::consts::PI;

use candle_core::{DType, Device, Tensor};

use crate::dsp::mrstft::{StftResolution, MAG_EPS};
use crate::dsp::StftConfig;
use crate::error::{Error, Result};

/// Floor under squared magnitudes when compressing complex spectra.
pub const COMPLEX_EPS: f64 = 1e-12;

fn to_tensor(v: Vec<f64>, shape: &[usize], dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_vec(v, shape, &Device::Cpu)?.to_dtype(dtype)?)
}

/// Inverse STFT as matrix products, with centre-pad trimming and window-power
/// normalization identical to the host implementation.
#[derive(Clone, Debug)]
pub struct Istft {
    cfg: StftConfig,
    /// `(F, N)` real and imaginary synthesis kernels, window applied.
    cr: Tensor,
    ci: Tensor,
    window: Vec<f64>,
    dtype: DType,
}

impl Istft {
    pub fn new(cfg: &StftConfig, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.fft_size;
        let bins = cfg.num_bins();
        let window = cfg.window();
        let mut cr = vec![0.0; bins * n];
        let mut ci = vec![0.0; bins * n];
        for k in 0..bins {
            let c = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
            for i in 0..n {
                let a = 2.0 * PI * ((k * i) % n) as f64 / n as f64;
                cr[k * n + i] = c * a.cos() / n as f64 * window[i];
                if k != 0 && k != bins - 1 {
                    ci[k * n + i] = -c * a.sin() / n as f64 * window[i];
                }
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            cr: to_tensor(cr, &[bins, n], dtype)?,
            ci: to_tensor(ci, &[bins, n], dtype)?,
            window,
            dtype,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// `re`, `im`: `(B, T, F)`. Returns `(B, num_samples)`.
    pub fn forward(&self, re: &Tensor, im: &Tensor, num_samples: usize) -> Result<Tensor> {
        let (b, t, f) = re.dims3()?;
        if f != self.cfg.num_bins() || im.dims() != re.dims() {
            return Err(Error::validation(format!(
                "inverse STFT expects (B, T, {}) spectra, got {:?} and {:?}",
                self.cfg.num_bins(),
                re.dims(),
                im.dims()
            )));
        }
        let n = self.cfg.fft_size;
        let hop = self.cfg.hop_len();
        let r = n / hop;
        let frames = (re.reshape((b * t, f))?.matmul(&self.cr)?
            + im.reshape((b * t, f))?.matmul(&self.ci)?)?
            .reshape((b, t, r, hop))?;
        let mut acc: Option<Tensor> = None;
        for j in 0..r {
            let part = frames.narrow(2, j, 1)?.squeeze(2)?.pad_with_zeros(1, j, r - 1 - j)?;
            acc = Some(match acc {
                None => part,
                Some(a) => (a + part)?,
            });
        }
        let padded_len = (t + r - 1) * hop;
        let ola = acc.expect("at least one chunk").reshape((b, padded_len))?;
        let mut env = vec![0.0; padded_len];
        for ti in 0..t {
            for (i, w) in self.window.iter().enumerate() {
                env[ti * hop + i] += w * w;
            }
        }
        let pad = n / 2;
        let take = num_samples.min(padded_len.saturating_sub(pad));
        let inv: Vec<f64> = env[pad..pad + take]
            .iter()
            .map(|&e| if e > 1e-11 { 1.0 / e } else { 0.0 })
            .collect();
        let inv = to_tensor(inv, &[1, take], self.dtype)?;
        let out = ola.narrow(1, pad, take)?.broadcast_mul(&inv)?;
        Ok(if take < num_samples {
            out.pad_with_zeros(1, 0, num_samples - take)?
        } else {
            out
        })
    }
}

/// Unpadded magnitude STFT at one resolution.
#[derive(Clone, Debug)]
pub struct MagnitudeStft {
    res: StftResolution,
    /// `(N, F)` windowed DFT kernels.
    dr: Tensor,
    di: Tensor,
}

impl MagnitudeStft {
    pub fn new(res: StftResolution, dtype: DType) -> Result<Self> {
        res.validate()?;
        if !res.fft.is_multiple_of(res.hop) {
            return Err(Error::config(format!(
                "FFT size {} must be a multiple of the hop {}",
                res.fft, res.hop
            )));
        }
        let n = res.fft;
        let bins = res.bins();
        let w = res.window();
        let mut dr = vec![0.0; n * bins];
        let mut di = vec![0.0; n * bins];
        for i in 0..n {
            for k in 0..bins {
                let a = 2.0 * PI * ((k * i) % n) as f64 / n as f64;
                dr[i * bins + k] = w[i] * a.cos();
                di[i * bins + k] = -w[i] * a.sin();
            }
        }
        Ok(Self {
            res,
            dr: to_tensor(dr, &[n, bins], dtype)?,
            di: to_tensor(di, &[n, bins], dtype)?,
        })
    }

    pub fn resolution(&self) -> &StftResolution {
        &self.res
    }

    /// `(B, L)` to `(B, T, F)` magnitudes with the `MAG_EPS` floor.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, len) = x.dims2()?;
        let t = self.res.frames(len)?;
        let hop = self.res.hop;
        let r = self.res.fft / hop;
        let chunks = x.narrow(1, 0, (t + r - 1) * hop)?.reshape((b, t + r - 1, hop))?;
        let parts: Vec<Tensor> = (0..r)
            .map(|j| chunks.narrow(1, j, t))
            .collect::<candle_core::Result<_>>()?;
        let frames = super::layers::cat(&parts, 2)?.reshape((b * t, self.res.fft))?;
        let re = frames.matmul(&self.dr)?;
        let im = frames.matmul(&self.di)?;
        let mag = ((re.sqr()? + im.sqr()?)? + MAG_EPS)?.sqrt()?;
        Ok(mag.reshape((b, t, self.res.bins()))?)
    }
}

/// Spectral convergence plus mean log-magnitude L1, summed over resolutions.
#[derive(Clone, Debug)]
pub struct MrStftLoss {
    stfts: Vec<MagnitudeStft>,
}

impl MrStftLoss {
    pub fn new(resolutions: &[StftResolution], dtype: DType) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::config("at least one STFT resolution is required"));
        }
        Ok(Self {
            stfts: resolutions
                .iter()
                .map(|r| MagnitudeStft::new(*r, dtype))
                .collect::<Result<_>>()?,
        })
    }

    pub fn resolutions(&self) -> Vec<StftResolution> {
        self.stfts.iter().map(|s| *s.resolution()).collect()
    }

    /// `est`, `reference`: `(B, L)`. Returns a scalar.
    pub fn forward(&self, est: &Tensor, reference: &Tensor) -> Result<Tensor> {
        if est.dims() != reference.dims() {
            return Err(Error::validation(format!(
                "length mismatch: {:?} vs {:?}",
                est.dims(),
                reference.dims()
            )));
        }
        let mut total: Option<Tensor> = None;
        for s in &self.stfts {
            let e = s.forward(est)?;
            let r = s.forward(reference)?;
            let sc = ((&r - &e)?.sqr()?.sum_all()?.sqrt()? / r.sqr()?.sum_all()?.sqrt()?)?;
            let lm = (r.log()? - e.log()?)?.abs()?.mean_all()?;
            let term = (sc + lm)?;
            total = Some(match total {
                None => term,
                Some(t) => (t + term)?,
            });
        }
        Ok(total.expect("non-empty"))
    }
}

/// Mean absolute sample error.
pub fn waveform_loss(est: &Tensor, reference: &Tensor) -> Result<Tensor> {
    if est.dims() != reference.dims() {
        return Err(Error::validation(format!(
            "length mismatch: {:?} vs {:?}",
            est.dims(),
            reference.dims()
        )));
    }
    Ok((est - reference)?.abs()?.mean_all()?)
}

/// `X · (|X|² + eps)^((c − 1)/2)`, applied to separate real and imaginary parts.
pub fn compress_complex(re: &Tensor, im: &Tensor, c: f64) -> Result<(Tensor, Tensor)> {
    let p = ((re.sqr()? + im.sqr()?)? + COMPLEX_EPS)?;
    let s = p.log()?.affine((c - 1.0) / 2.0, 0.0)?.exp()?;
    Ok(((re * &s)?, (im * &s)?))
}

/// Inverse of [`compress_complex`] up to the `eps` floor.
pub fn decompress_complex(re: &Tensor, im: &Tensor, c: f64) -> Result<(Tensor, Tensor)> {
    let p = ((re.sqr()? + im.sqr()?)? + COMPLEX_EPS)?;
    let s = p.log()?.affine((1.0 / c - 1.0) / 2.0, 0.0)?.exp()?;
    Ok(((re * &s)?, (im * &s)?))
}

/// Host-side [`compress_complex`] for one value.
pub fn compress_complex_host(re: f64, im: f64, c: f64) -> (f64, f64) {
    let s = (re * re + im * im + COMPLEX_EPS).powf((c - 1.0) / 2.0);
    (re * s, im * s)
}
