use rustfft::num_complex::Complex64;

use super::stft::{ComplexSpectrogram, StftConfig};
use crate::error::{Error, Result};

pub const NUM_SUBBANDS: usize = 3;

/// Three equal-width subbands of the non-Nyquist bins, stored as
/// `frames × bins_per_band × 3 bands × (re, im)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandStack {
    frames: usize,
    bins_per_band: usize,
    band_edges: [usize; NUM_SUBBANDS + 1],
    data: Vec<f64>,
    config: StftConfig,
    num_samples: usize,
}

impl SubbandStack {
    pub fn new(
        frames: usize,
        data: Vec<f64>,
        config: StftConfig,
        num_samples: usize,
    ) -> Result<Self> {
        let bins_per_band = bins_per_band(&config)?;
        if data.len() != frames * bins_per_band * NUM_SUBBANDS * 2 {
            return Err(Error::validation(format!(
                "subband data has {} values, expected {frames} x {bins_per_band} x 3 x 2",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            bins_per_band,
            band_edges: band_edges(bins_per_band),
            data,
            config,
            num_samples,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins_per_band(&self) -> usize {
        self.bins_per_band
    }

    pub fn band_edges(&self) -> [usize; NUM_SUBBANDS + 1] {
        self.band_edges
    }

    /// Channel count when bands and real/imaginary parts are concatenated.
    pub fn channels(&self) -> usize {
        NUM_SUBBANDS * 2
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    fn index(&self, t: usize, bin: usize, band: usize, part: usize) -> usize {
        ((t * self.bins_per_band + bin) * NUM_SUBBANDS + band) * 2 + part
    }

    pub fn get(&self, t: usize, bin: usize, band: usize) -> Complex64 {
        let i = self.index(t, bin, band, 0);
        Complex64::new(self.data[i], self.data[i + 1])
    }
}

/// Bins per band for a configuration, or a configuration error naming the
/// nearest usable FFT size.
pub fn bins_per_band(cfg: &StftConfig) -> Result<usize> {
    let usable = cfg.num_bins() - 1;
    if usable == 0 || !usable.is_multiple_of(NUM_SUBBANDS) {
        let next = cfg.fft_size.div_ceil(6) * 6;
        return Err(Error::config(format!(
            "fft_size {} leaves {usable} non-Nyquist bins, not divisible into 3 subbands; \
             fft_size must be a multiple of 6 (e.g. {next})",
            cfg.fft_size
        )));
    }
    Ok(usable / NUM_SUBBANDS)
}

pub fn band_edges(bins_per_band: usize) -> [usize; NUM_SUBBANDS + 1] {
    [0, bins_per_band, 2 * bins_per_band, 3 * bins_per_band]
}

/// Split a spectrogram into the subband stack and the Nyquist column, which
/// is carried alongside unmodified.
pub fn split_subbands(spec: &ComplexSpectrogram) -> Result<(SubbandStack, Vec<Complex64>)> {
    let b = bins_per_band(spec.config())?;
    let frames = spec.frames();
    let mut data = Vec::with_capacity(frames * b * NUM_SUBBANDS * 2);
    let mut nyquist = Vec::with_capacity(frames);
    for t in 0..frames {
        let frame = spec.frame(t);
        for bin in 0..b {
            for band in 0..NUM_SUBBANDS {
                let c = frame[band * b + bin];
                data.push(c.re);
                data.push(c.im);
            }
        }
        nyquist.push(frame[NUM_SUBBANDS * b]);
    }
    let stack = SubbandStack::new(frames, data, spec.config().clone(), spec.num_samples())?;
    Ok((stack, nyquist))
}

pub fn merge_subbands(stack: &SubbandStack, nyquist: &[Complex64]) -> Result<ComplexSpectrogram> {
    let b = bins_per_band(stack.config())?;
    if b != stack.bins_per_band() || stack.band_edges() != band_edges(b) {
        return Err(Error::validation("subband edges do not match the STFT configuration"));
    }
    if nyquist.len() != stack.frames() {
        return Err(Error::validation(format!(
            "nyquist column has {} frames, stack has {}",
            nyquist.len(),
            stack.frames()
        )));
    }
    let bins = stack.config().num_bins();
    let mut data = Vec::with_capacity(stack.frames() * bins);
    for (t, &nyq) in nyquist.iter().enumerate() {
        for band in 0..NUM_SUBBANDS {
            for bin in 0..b {
                data.push(stack.get(t, bin, band));
            }
        }
        data.push(nyq);
    }
    ComplexSpectrogram::new(
        stack.frames(),
        data,
        stack.config().clone(),
        stack.num_samples(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_from(values: &[(f64, f64)], cfg: &StftConfig) -> ComplexSpectrogram {
        let bins = cfg.num_bins();
        let frames = values.len() / bins;
        let data = values[..frames * bins]
            .iter()
            .map(|&(r, i)| Complex64::new(r, i))
            .collect();
        ComplexSpectrogram::new(frames, data, cfg.clone(), frames * cfg.hop_len()).unwrap()
    }

    #[test]
    fn full_band_edges() {
        let cfg = StftConfig::full_band();
        assert_eq!(bins_per_band(&cfg).unwrap(), 160);
        assert_eq!(band_edges(160), [0, 160, 320, 480]);
        let spec = ComplexSpectrogram::zeros(3, cfg, 960).unwrap();
        let (stack, nyq) = split_subbands(&spec).unwrap();
        assert_eq!(stack.channels(), 6);
        assert_eq!(stack.data().len(), 3 * 160 * 3 * 2);
        assert_eq!(nyq.len(), 3);
        let merged = merge_subbands(&stack, &nyq).unwrap();
        assert_eq!(merged, spec);
    }

    #[test]
    fn indivisible_fft_names_required_size() {
        let cfg = StftConfig::with_rate(1000).unwrap();
        let spec = ComplexSpectrogram::zeros(2, cfg, 20).unwrap();
        match split_subbands(&spec) {
            Err(Error::Config(msg)) => assert!(msg.contains("e.g. 24"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn band_layout_matches_bins() {
        let cfg = StftConfig::with_rate(1200).unwrap();
        let bins = cfg.num_bins();
        let values: Vec<(f64, f64)> = (0..2 * bins).map(|i| (i as f64, -(i as f64))).collect();
        let spec = spec_from(&values, &cfg);
        let (stack, nyq) = split_subbands(&spec).unwrap();
        assert_eq!(stack.bins_per_band(), 4);
        assert_eq!(stack.get(1, 2, 1), spec.get(1, 6));
        assert_eq!(nyq[1], spec.get(1, 12));
    }

    #[test]
    fn nyquist_length_mismatch() {
        let cfg = StftConfig::with_rate(1200).unwrap();
        let spec = ComplexSpectrogram::zeros(4, cfg, 48).unwrap();
        let (stack, _) = split_subbands(&spec).unwrap();
        assert!(matches!(
            merge_subbands(&stack, &[Complex64::new(0.0, 0.0)]),
            Err(Error::Validation(_))
        ));
    }

    proptest! {
        #[test]
        fn split_merge_is_identity(values in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 13 * 5)) {
            let cfg = StftConfig::with_rate(1200).unwrap();
            let spec = spec_from(&values, &cfg);
            let (stack, nyq) = split_subbands(&spec).unwrap();
            prop_assert_eq!(merge_subbands(&stack, &nyq).unwrap(), spec);
        }

        #[test]
        fn merge_split_is_identity(values in prop::collection::vec(-1e3f64..1e3, 5 * 4 * 3 * 2), nyq in prop::collection::vec(-1.0f64..1.0, 5)) {
            let cfg = StftConfig::with_rate(1200).unwrap();
            let stack = SubbandStack::new(5, values, cfg, 60).unwrap();
            let nyq: Vec<Complex64> = nyq.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
            let (again, nyq_again) = split_subbands(&merge_subbands(&stack, &nyq).unwrap()).unwrap();
            prop_assert_eq!(again, stack);
            prop_assert_eq!(nyq_again, nyq);
        }
    }
}
