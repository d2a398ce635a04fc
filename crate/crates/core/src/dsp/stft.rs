//! Short-time Fourier analysis and synthesis with centered (reflect-padded)
//! framing and a periodic Hann window.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::waveform::{Waveform, FULL_BAND_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate_hz: u32,
    pub win_len_s: f64,
    pub hop_len_s: f64,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::full_band()
    }
}

impl StftConfig {
    /// 48 kHz, 20 ms Hann window, 10 ms hop, 960-point FFT.
    pub fn full_band() -> Self {
        Self {
            sample_rate_hz: FULL_BAND_RATE,
            win_len_s: 0.020,
            hop_len_s: 0.010,
            fft_size: 960,
            window: WindowKind::Hann,
        }
    }

    /// 20 ms / 10 ms framing at an arbitrary rate with `fft_size` equal to the
    /// window length. Small rates give tiny spectrograms for tests.
    pub fn with_rate(sample_rate_hz: u32) -> Result<Self> {
        let cfg = Self {
            sample_rate_hz,
            win_len_s: 0.020,
            hop_len_s: 0.010,
            fft_size: (sample_rate_hz as f64 * 0.020).round() as usize,
            window: WindowKind::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn win_len(&self) -> usize {
        (self.win_len_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_len_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / 2.0
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.fft_size as f64
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        len / self.hop_len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(Error::config("sample_rate_hz must be positive"));
        }
        let win = self.win_len();
        let hop = self.hop_len();
        if hop == 0 || win == 0 {
            return Err(Error::config("window and hop must span at least one sample"));
        }
        if !win.is_multiple_of(hop) || win / hop < 2 {
            return Err(Error::config(format!(
                "window ({win}) must be an integer multiple >= 2 of the hop ({hop}) for overlap-add"
            )));
        }
        if self.fft_size < win {
            return Err(Error::config(format!(
                "fft_size {} is shorter than the window ({win} samples)",
                self.fft_size
            )));
        }
        if !self.fft_size.is_multiple_of(2) {
            return Err(Error::config("fft_size must be even"));
        }
        if !self.fft_size.is_multiple_of(hop) {
            return Err(Error::config(format!(
                "fft_size {} must be a multiple of the hop ({hop})",
                self.fft_size
            )));
        }
        Ok(())
    }

    /// Periodic Hann window of `win_len` samples, zero-padded (centered) to
    /// `fft_size`.
    pub fn window(&self) -> Vec<f64> {
        let win = self.win_len();
        let n = self.fft_size;
        let offset = (n - win) / 2;
        let mut w = vec![0.0; n];
        for (i, v) in w[offset..offset + win].iter_mut().enumerate() {
            *v = hann(i, win);
        }
        w
    }
}

pub(crate) fn hann(i: usize, len: usize) -> f64 {
    let x = std::f64::consts::PI * i as f64 / len as f64;
    x.sin().powi(2)
}

/// Complex spectrogram stored frame-major (`frames × bins`).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    config: StftConfig,
    num_samples: usize,
}

impl ComplexSpectrogram {
    pub fn new(
        frames: usize,
        data: Vec<Complex64>,
        config: StftConfig,
        num_samples: usize,
    ) -> Result<Self> {
        config.validate()?;
        let bins = config.num_bins();
        if data.len() != frames * bins {
            return Err(Error::validation(format!(
                "spectrogram data has {} values, expected {frames} x {bins}",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            bins,
            data,
            config,
            num_samples,
        })
    }

    pub fn zeros(frames: usize, config: StftConfig, num_samples: usize) -> Result<Self> {
        let bins = config.num_bins();
        Self::new(
            frames,
            vec![Complex64::new(0.0, 0.0); frames * bins],
            config,
            num_samples,
        )
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Length of the waveform this spectrogram was analysed from.
    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        let b = self.bins;
        &mut self.data[t * b..(t + 1) * b]
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    /// Spectral energy, counting each non-DC, non-Nyquist bin twice for its
    /// conjugate partner, divided by the FFT length.
    pub fn energy(&self) -> f64 {
        let n = self.config.fft_size as f64;
        let last = self.bins - 1;
        let mut e = 0.0;
        for t in 0..self.frames {
            for (f, c) in self.frame(t).iter().enumerate() {
                let w = if f == 0 || f == last { 1.0 } else { 2.0 };
                e += w * c.norm_sqr();
            }
        }
        e / n
    }
}

/// Reusable analysis/synthesis plans for one configuration.
pub struct StftProcessor {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftProcessor {
    pub fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: cfg.window(),
            forward: planner.plan_fft_forward(cfg.fft_size),
            inverse: planner.plan_fft_inverse(cfg.fft_size),
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn analyze(&self, wave: &Waveform) -> Result<ComplexSpectrogram> {
        if wave.sample_rate() != self.cfg.sample_rate_hz {
            return Err(Error::config(format!(
                "waveform is {} Hz but the STFT is configured for {} Hz",
                wave.sample_rate(),
                self.cfg.sample_rate_hz
            )));
        }
        let n = self.cfg.fft_size;
        let hop = self.cfg.hop_len();
        let pad = n / 2;
        let x = wave.samples();
        let frames = self.cfg.num_frames(x.len());
        let bins = self.cfg.num_bins();
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = (t * hop) as isize - pad as isize;
            for (i, b) in buf.iter_mut().enumerate() {
                let idx = reflect_index(start + i as isize, x.len());
                *b = Complex64::new(x[idx] as f64 * self.window[i], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
        ComplexSpectrogram::new(frames, data, self.cfg.clone(), x.len())
    }

    pub fn synthesize(&self, spec: &ComplexSpectrogram) -> Result<Waveform> {
        if spec.config() != &self.cfg {
            return Err(Error::validation(
                "spectrogram was produced with a different STFT configuration",
            ));
        }
        if spec.data().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::validation("spectrogram contains non-finite values"));
        }
        let n = self.cfg.fft_size;
        let hop = self.cfg.hop_len();
        let pad = n / 2;
        let bins = spec.bins();
        let frames = spec.frames();
        let padded_len = (frames.saturating_sub(1)) * hop + n;
        let mut out = vec![0.0f64; padded_len];
        let mut env = vec![0.0f64; padded_len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for t in 0..frames {
            let frame = spec.frame(t);
            buf[..bins].copy_from_slice(frame);
            buf[0].im = 0.0;
            buf[bins - 1].im = 0.0;
            for k in 1..bins - 1 {
                buf[n - k] = frame[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let offset = t * hop;
            for i in 0..n {
                let w = self.window[i];
                out[offset + i] += buf[i].re * scale * w;
                env[offset + i] += w * w;
            }
        }
        let samples = (0..spec.num_samples())
            .map(|i| {
                let j = i + pad;
                if j < padded_len && env[j] > 1e-11 {
                    (out[j] / env[j]) as f32
                } else {
                    0.0
                }
            })
            .collect();
        Waveform::new(samples, self.cfg.sample_rate_hz)
    }
}

/// Mirror an out-of-range index back into `[0, len)` without repeating the
/// edge sample.
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= len as isize {
        m = period - m;
    }
    m as usize
}

pub fn stft(wave: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    StftProcessor::new(cfg)?.analyze(wave)
}

pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig) -> Result<Waveform> {
    StftProcessor::new(cfg)?.synthesize(spec)
}

/// Waveform energy weighted by the squared-window overlap envelope. Equals
/// [`ComplexSpectrogram::energy`] of the analysis exactly (Parseval per frame).
pub fn window_compensated_energy(wave: &Waveform, cfg: &StftConfig) -> Result<f64> {
    cfg.validate()?;
    let n = cfg.fft_size;
    let hop = cfg.hop_len();
    let pad = n / 2;
    let x = wave.samples();
    let frames = cfg.num_frames(x.len());
    let w = cfg.window();
    let mut e = 0.0;
    for t in 0..frames {
        let start = (t * hop) as isize - pad as isize;
        for (i, wi) in w.iter().enumerate() {
            let v = x[reflect_index(start + i as isize, x.len())] as f64 * wi;
            e += v * v;
        }
    }
    Ok(e)
}
