//! Deterministic synthetic material for demos and desk-scale experiments:
//! voiced speech-like signals, noise, impulse responses and transients.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::waveform::Waveform;

/// Harmonic "voice" with a gliding pitch, two formant-like resonances,
/// syllable-rate amplitude modulation and short pauses. Peak about 0.3.
pub fn voiced_speech(seed: u64, seconds: f64, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * sample_rate as f64).round().max(1.0) as usize;
    let sr = sample_rate as f64;
    let f0_base = rng.random_range(95.0..220.0);
    let f0_depth = rng.random_range(0.05..0.2);
    let f0_rate = rng.random_range(0.8..2.5);
    let formants = [rng.random_range(450.0..900.0), rng.random_range(1100.0..2600.0)];
    let syllable_rate = rng.random_range(3.0..5.5);
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let nyquist = sr / 2.0;
    let mut out = vec![0.0f32; n];
    let mut phase = 0.0f64;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let f0 = f0_base * (1.0 + f0_depth * (2.0 * PI * f0_rate * t).sin());
        phase += 2.0 * PI * f0 / sr;
        let mut v = 0.0;
        let mut h = 1;
        while (h as f64) * f0 < nyquist.min(12_000.0) {
            let fh = h as f64 * f0;
            let env: f64 = formants
                .iter()
                .map(|&fc| 1.0 / (1.0 + ((fh - fc) / (0.15 * fc + 80.0)).powi(2)))
                .sum::<f64>()
                + 0.05 / h as f64;
            v += env * (h as f64 * phase).sin();
            h += 1;
        }
        let syll = (PI * syllable_rate * t + phase0).sin().abs().powf(0.7);
        let gate = if (syllable_rate * t / 4.0 + phase0 / PI).fract() > 0.85 {
            0.0
        } else {
            1.0
        };
        *o = (0.08 * v * syll * gate) as f32;
    }
    let peak = out.iter().fold(0.0f32, |m, s| m.max(s.abs())).max(1e-9);
    out.iter_mut().for_each(|s| *s *= 0.3 / peak);
    Waveform::new(out, sample_rate).expect("finite synthetic signal")
}

/// Uniform white noise in [-amp, amp].
pub fn white_noise(seed: u64, len: usize, amp: f32, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (0..len.max(1)).map(|_| rng.random_range(-amp..=amp)).collect();
    Waveform::new(s, sample_rate).expect("finite noise")
}

/// One-pole low-passed noise, a crude babble/hum stand-in.
pub fn colored_noise(seed: u64, len: usize, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.random_range(0.6..0.97f32);
    let mut y = 0.0f32;
    let s = (0..len.max(1))
        .map(|_| {
            y = a * y + (1.0 - a) * rng.random_range(-1.0f32..1.0);
            y
        })
        .collect();
    Waveform::new(s, sample_rate).expect("finite noise")
}

/// Exponentially decaying noise tail behind a unit direct-path peak.
pub fn exponential_rir(seed: u64, t60_s: f64, length_s: f64, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (length_s * sample_rate as f64).round().max(2.0) as usize;
    let decay = (1e-3f64).ln() / (t60_s * sample_rate as f64);
    let mut h: Vec<f32> = (0..n)
        .map(|i| ((decay * i as f64).exp() * rng.random_range(-0.3..0.3)) as f32)
        .collect();
    h[0] = 1.0;
    Waveform::new(h, sample_rate).expect("finite rir")
}

/// Short decaying noise burst (door knock, keyboard click).
pub fn transient_burst(seed: u64, length_s: f64, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (length_s * sample_rate as f64).round().max(2.0) as usize;
    let tau = rng.random_range(0.1..0.4) * n as f64;
    let s = (0..n)
        .map(|i| ((-(i as f64) / tau).exp() * rng.random_range(-1.0..1.0)) as f32)
        .collect();
    Waveform::new(s, sample_rate).expect("finite burst")
}

pub fn sine(freq_hz: f64, amp: f64, len: usize, sample_rate: u32) -> Waveform {
    let s = (0..len.max(1))
        .map(|i| (amp * (2.0 * PI * freq_hz * i as f64 / sample_rate as f64).sin()) as f32)
        .collect();
    Waveform::new(s, sample_rate).expect("finite sine")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = voiced_speech(3, 0.5, 48_000);
        let b = voiced_speech(3, 0.5, 48_000);
        assert_eq!(a, b);
        assert_eq!(a.len(), 24_000);
        assert!((a.peak() - 0.3).abs() < 1e-6);
        assert_ne!(a, voiced_speech(4, 0.5, 48_000));
    }

    #[test]
    fn rir_has_direct_peak() {
        let h = exponential_rir(1, 0.5, 0.3, 48_000);
        let (imax, _) = h
            .samples()
            .iter()
            .enumerate()
            .fold((0, 0.0f32), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        assert_eq!(imax, 0);
    }
}
