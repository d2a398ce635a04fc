//! Individual distortions. Every operation preserves the input length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::{ComplexSpectrogram, StftConfig, StftProcessor, Waveform};
use crate::error::{Error, Result};

/// Allowed transient-injection SNR range in dB.
pub const TRANSIENT_SNR_RANGE_DB: (f64, f64) = (-5.0, 10.0);

/// Fade length around dropped packets.
pub const PACKET_FADE_S: f64 = 0.002;

/// Number of equal-width bands the spectral-hole codec proxy partitions
/// 0..Nyquist into.
pub const SPECTRAL_HOLE_BANDS: usize = 16;

fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Tile or truncate `noise` to `len` samples.
fn fit_length(noise: &[f32], len: usize) -> Vec<f32> {
    noise.iter().copied().cycle().take(len).collect()
}

fn power64(x: &[f32]) -> f64 {
    crate::dsp::waveform::mean_power(x)
}

/// Noise scaled so that `clean + noise` has the requested SNR, and the gain used.
pub fn scaled_noise(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<(Vec<f32>, f64)> {
    clean.ensure_same_rate(noise)?;
    if !snr_db.is_finite() {
        return Err(Error::validation("snr_db must be finite"));
    }
    let p_clean = clean.power();
    if p_clean <= 0.0 {
        return Err(Error::validation("clean signal has zero power"));
    }
    let tiled = fit_length(noise.samples(), clean.len());
    let p_noise = power64(&tiled);
    if p_noise <= 0.0 {
        return Err(Error::validation("noise has zero power"));
    }
    let gain = (p_clean / (p_noise * db_to_power(snr_db))).sqrt();
    Ok((tiled.iter().map(|&v| (v as f64 * gain) as f32).collect(), gain))
}

/// Add noise at a global SNR.
pub fn mix_noise(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    let (n, _) = scaled_noise(clean, noise, snr_db)?;
    clean.with_samples(clean.samples().iter().zip(&n).map(|(c, v)| c + v).collect())
}

/// Linear full convolution through the FFT.
pub(crate) fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa.iter().take(out_len).map(|c| c.re / n as f64).collect()
}

/// Convolve with a room impulse response, aligned so its direct-path peak
/// maps to lag 0, then restore the clean RMS.
pub fn apply_reverb(clean: &Waveform, rir: &Waveform) -> Result<Waveform> {
    clean.ensure_same_rate(rir)?;
    if rir.len() >= clean.len() {
        return Err(Error::validation(format!(
            "RIR ({} samples) must be shorter than the signal ({} samples)",
            rir.len(),
            clean.len()
        )));
    }
    let h = rir.samples();
    let (peak, peak_val) = h
        .iter()
        .enumerate()
        .fold((0, 0.0f32), |(bi, bv), (i, &v)| {
            if v.abs() > bv {
                (i, v.abs())
            } else {
                (bi, bv)
            }
        });
    if peak_val == 0.0 {
        return Err(Error::validation("RIR is silent"));
    }
    let x: Vec<f64> = clean.samples().iter().map(|&v| v as f64).collect();
    let hf: Vec<f64> = h.iter().map(|&v| v as f64).collect();
    let y = fft_convolve(&x, &hf);
    let mut out: Vec<f64> = y[peak..peak + clean.len()].to_vec();
    let p_out = out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64;
    let p_clean = clean.power();
    if p_out > 0.0 {
        let g = (p_clean / p_out).sqrt();
        out.iter_mut().for_each(|v| *v *= g);
    }
    clean.with_samples(out.into_iter().map(|v| v as f32).collect())
}

/// Hard clamp to `[-threshold, threshold]`.
pub fn clip(wave: &Waveform, threshold: f64) -> Result<Waveform> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::config(format!(
            "clip threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let t = threshold as f32;
    wave.with_samples(wave.samples().iter().map(|v| v.clamp(-t, t)).collect())
}

pub fn packet_len(packet_ms: f64, sample_rate: u32) -> Result<usize> {
    if !(packet_ms > 0.0) || !packet_ms.is_finite() {
        return Err(Error::config(format!("packet_ms must be positive, got {packet_ms}")));
    }
    Ok(((packet_ms * sample_rate as f64 / 1000.0).round() as usize).max(1))
}

/// Independent Bernoulli loss decision per packet.
pub fn draw_loss_mask(n_packets: usize, loss_rate: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&loss_rate) {
        return Err(Error::config(format!("loss_rate must lie in [0, 1], got {loss_rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_packets).map(|_| rng.random::<f64>() < loss_rate).collect())
}

/// Zero every packet flagged in `mask`, with linear fades into and out of
/// each gap.
pub fn apply_packet_mask(wave: &Waveform, packet_len: usize, mask: &[bool]) -> Result<Waveform> {
    let n = wave.len();
    let expected = n.div_ceil(packet_len);
    if mask.len() != expected {
        return Err(Error::validation(format!(
            "loss mask has {} packets, signal needs {expected}",
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Ok(wave.clone());
    }
    let fade = ((PACKET_FADE_S * wave.sample_rate() as f64).round() as usize).max(1);
    let lost = |i: usize| mask[i / packet_len];
    // Distance to the nearest lost sample, scanning both directions.
    let mut dist = vec![usize::MAX; n];
    let mut last: Option<usize> = None;
    for i in 0..n {
        if lost(i) {
            last = Some(i);
        }
        if let Some(l) = last {
            dist[i] = i - l;
        }
    }
    let mut next: Option<usize> = None;
    for i in (0..n).rev() {
        if lost(i) {
            next = Some(i);
        }
        if let Some(l) = next {
            dist[i] = dist[i].min(l - i);
        }
    }
    let out = wave
        .samples()
        .iter()
        .zip(&dist)
        .map(|(&s, &d)| {
            let g = if d >= fade { 1.0 } else { d as f32 / fade as f32 };
            s * g
        })
        .collect();
    wave.with_samples(out)
}

pub fn drop_packets(
    wave: &Waveform,
    packet_ms: f64,
    loss_rate: f64,
    seed: u64,
) -> Result<(Waveform, Vec<bool>)> {
    let plen = packet_len(packet_ms, wave.sample_rate())?;
    let mask = draw_loss_mask(wave.len().div_ceil(plen), loss_rate, seed)?;
    Ok((apply_packet_mask(wave, plen, &mask)?, mask))
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let y = x * x / 4.0;
    for k in 1..64 {
        term *= y / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Linear-phase Kaiser-windowed sinc taps with 60 dB stopband rejection
/// starting at `1.1 × cutoff` (or Nyquist, whichever is lower).
pub fn lowpass_taps(cutoff_hz: f64, sample_rate: u32) -> Result<Vec<f64>> {
    let sr = sample_rate as f64;
    let nyq = sr / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyq) {
        return Err(Error::config(format!(
            "cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({nyq} Hz)"
        )));
    }
    let stop = (1.1 * cutoff_hz).min(nyq);
    let width = stop - cutoff_hz;
    let atten = 60.0;
    let beta = 0.1102 * (atten - 8.7);
    let dw = 2.0 * std::f64::consts::PI * width / sr;
    let mut n = ((atten - 8.0) / (2.285 * dw)).ceil() as usize + 1;
    n = n.min(1 << 16);
    if n.is_multiple_of(2) {
        n += 1;
    }
    let fc = (cutoff_hz + stop) / 2.0 / sr;
    let m = (n - 1) as f64 / 2.0;
    let i0b = bessel_i0(beta);
    let taps: Vec<f64> = (0..n)
        .map(|i| {
            let k = i as f64 - m;
            let sinc = if k == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * k).sin() / (std::f64::consts::PI * k)
            };
            let r = k / m;
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
            sinc * w
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / dc).collect())
}

/// Zero-delay low-pass filter.
pub fn lowpass(wave: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    let taps = lowpass_taps(cutoff_hz, wave.sample_rate())?;
    let delay = (taps.len() - 1) / 2;
    let x: Vec<f64> = wave.samples().iter().map(|&v| v as f64).collect();
    let y = fft_convolve(&x, &taps);
    wave.with_samples(y[delay..delay + wave.len()].iter().map(|&v| v as f32).collect())
}

/// Low-bitrate codec stand-ins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodecProfile {
    /// μ-law companding with `2^bits` levels.
    MuLawQuantize { bits: u32 },
    /// Remove the listed bands out of [`SPECTRAL_HOLE_BANDS`] equal-width bands.
    SpectralHole { bands: Vec<usize> },
    /// Uniform requantization to `2^bits` levels over [-1, 1].
    Bitcrush { bits: u32 },
}

impl CodecProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            CodecProfile::MuLawQuantize { bits } if !(2..=16).contains(bits) => Err(Error::config(
                format!("mu-law bits must lie in 2..=16, got {bits}"),
            )),
            CodecProfile::Bitcrush { bits } if !(1..=16).contains(bits) => Err(Error::config(
                format!("bitcrush bits must lie in 1..=16, got {bits}"),
            )),
            CodecProfile::SpectralHole { bands } => {
                if let Some(b) = bands.iter().find(|&&b| b >= SPECTRAL_HOLE_BANDS) {
                    return Err(Error::config(format!(
                        "spectral hole band {b} out of range 0..{SPECTRAL_HOLE_BANDS}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn uniform_quantize(y: f64, levels: u64) -> f64 {
    let l = (levels - 1) as f64;
    let q = (((y.clamp(-1.0, 1.0) + 1.0) / 2.0) * l).round() / l;
    q * 2.0 - 1.0
}

/// Bin range `[lo, hi)` of spectral-hole band `band` for an `n`-point FFT.
pub fn spectral_hole_bins(band: usize, n: usize) -> (usize, usize) {
    let half = n / 2 + 1;
    (band * half / SPECTRAL_HOLE_BANDS, (band + 1) * half / SPECTRAL_HOLE_BANDS)
}

pub fn codec_sim(wave: &Waveform, profile: &CodecProfile) -> Result<Waveform> {
    profile.validate()?;
    let out = match profile {
        CodecProfile::MuLawQuantize { bits } => {
            let mu = ((1u64 << bits) - 1) as f64;
            let levels = 1u64 << bits;
            let ln1mu = (1.0 + mu).ln();
            wave.samples()
                .iter()
                .map(|&s| {
                    let x = (s as f64).clamp(-1.0, 1.0);
                    let y = x.signum() * (1.0 + mu * x.abs()).ln() / ln1mu;
                    let q = uniform_quantize(y, levels);
                    (q.signum() * ((1.0 + mu).powf(q.abs()) - 1.0) / mu) as f32
                })
                .collect()
        }
        CodecProfile::Bitcrush { bits } => {
            let levels = 1u64 << bits;
            wave.samples()
                .iter()
                .map(|&s| uniform_quantize(s as f64, levels) as f32)
                .collect()
        }
        CodecProfile::SpectralHole { bands } => {
            let n = wave.len();
            let mut planner = FftPlanner::<f64>::new();
            let mut buf: Vec<Complex64> = wave
                .samples()
                .iter()
                .map(|&v| Complex64::new(v as f64, 0.0))
                .collect();
            planner.plan_fft_forward(n).process(&mut buf);
            for &b in bands {
                let (lo, hi) = spectral_hole_bins(b, n);
                for k in lo..hi {
                    buf[k] = Complex64::new(0.0, 0.0);
                    if k > 0 {
                        buf[n - k] = Complex64::new(0.0, 0.0);
                    }
                }
            }
            planner.plan_fft_inverse(n).process(&mut buf);
            buf.iter().map(|c| (c.re / n as f64) as f32).collect()
        }
    };
    wave.with_samples(out)
}

/// Magnitude spectral subtraction settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrProfile {
    /// Over-subtraction factor α.
    pub over_subtraction: f64,
    /// Spectral floor β, relative to the noisy power.
    pub floor: f64,
}

impl NrProfile {
    fn validate(&self) -> Result<()> {
        if !(self.over_subtraction >= 0.0) {
            return Err(Error::config("over-subtraction factor must be non-negative"));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(Error::config("spectral floor must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Spectral subtraction of a stationary noise estimate taken from
/// `noise_estimate`, which should be the noise actually present in `noisy`.
pub fn spectral_subtract(
    noisy: &Waveform,
    noise_estimate: &Waveform,
    profile: &NrProfile,
) -> Result<Waveform> {
    profile.validate()?;
    noisy.ensure_same_rate(noise_estimate)?;
    let cfg = StftConfig::with_rate(noisy.sample_rate())?;
    let proc = StftProcessor::new(&cfg)?;
    let y = proc.analyze(noisy)?;
    let n = proc.analyze(noise_estimate)?;
    let bins = y.bins();
    let mut psd = vec![0.0; bins];
    for t in 0..n.frames() {
        for (p, c) in psd.iter_mut().zip(n.frame(t)) {
            *p += c.norm_sqr();
        }
    }
    psd.iter_mut().for_each(|p| *p /= n.frames() as f64);
    let mut data = y.data().to_vec();
    for frame in data.chunks_mut(bins) {
        for (c, &p) in frame.iter_mut().zip(&psd) {
            let py = c.norm_sqr();
            if py > 0.0 {
                let ps = (py - profile.over_subtraction * p).max(profile.floor * py);
                *c *= (ps / py).sqrt();
            }
        }
    }
    let spec = ComplexSpectrogram::new(y.frames(), data, cfg, noisy.len())?;
    proc.synthesize(&spec)
}

/// Mix noise at `snr_db`, then run spectral subtraction with the true noise
/// as the estimate. Leaves musical-noise residue typical of classic NR.
pub fn nr_artifact(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    profile: &NrProfile,
) -> Result<Waveform> {
    let (scaled, _) = scaled_noise(clean, noise, snr_db)?;
    let noisy = clean.with_samples(clean.samples().iter().zip(&scaled).map(|(c, v)| c + v).collect())?;
    let est = clean.with_samples(scaled)?;
    spectral_subtract(&noisy, &est, profile)
}

/// Exact scalar gain in dB.
pub fn adjust_loudness(wave: &Waveform, gain_db: f64) -> Result<Waveform> {
    let g = 10f64.powf(gain_db / 20.0);
    wave.with_samples(wave.samples().iter().map(|&s| (s as f64 * g) as f32).collect())
}

/// Where and how strongly a transient was injected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectedTransient {
    pub position: usize,
    pub snr_db: f64,
    pub gain: f64,
}

/// Add `transient` at a local SNR measured over the overlap window only.
/// With `position = None` the offset is drawn uniformly from `seed`.
pub fn inject_transient(
    wave: &Waveform,
    transient: &Waveform,
    snr_db: f64,
    position: Option<usize>,
    seed: u64,
) -> Result<(Waveform, InjectedTransient)> {
    wave.ensure_same_rate(transient)?;
    let (lo, hi) = TRANSIENT_SNR_RANGE_DB;
    if !(lo..=hi).contains(&snr_db) {
        return Err(Error::validation(format!(
            "transient SNR {snr_db} dB outside [{lo}, {hi}] dB"
        )));
    }
    let tlen = transient.len();
    if tlen >= wave.len() {
        return Err(Error::validation("transient must be shorter than the signal"));
    }
    let max_pos = wave.len() - tlen;
    let position = match position {
        Some(p) if p > max_pos => {
            return Err(Error::validation(format!(
                "transient position {p} runs past the end (max {max_pos})"
            )))
        }
        Some(p) => p,
        None => ChaCha8Rng::seed_from_u64(seed).random_range(0..=max_pos),
    };
    let window = &wave.samples()[position..position + tlen];
    let p_local = power64(window);
    let p_t = transient.power();
    if p_t <= 0.0 {
        return Err(Error::validation("transient has zero power"));
    }
    if p_local <= 0.0 {
        return Err(Error::validation("signal is silent under the transient"));
    }
    let gain = (p_local / (p_t * db_to_power(snr_db))).sqrt();
    let mut out = wave.samples().to_vec();
    for (o, &t) in out[position..position + tlen].iter_mut().zip(transient.samples()) {
        *o += (t as f64 * gain) as f32;
    }
    Ok((
        wave.with_samples(out)?,
        InjectedTransient {
            position,
            snr_db,
            gain,
        },
    ))
}
