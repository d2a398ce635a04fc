use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dsp::{make_erb_filterbank, StftConfig, DEFAULT_COMPRESSION, DEFAULT_ERB_BANDS};
use crate::error::{Error, Result};
use crate::gan::config::{config_hash, SizeProfile};
use crate::nn::{BiLstm, Linear, Lstm, PRelu};

pub const DEFAULT_SPLIT_HZ: f64 = 4000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfNetConfig {
    pub profile: SizeProfile,
    pub stft: StftConfig,
    pub erb_bands: usize,
    /// Boundary between the low and high refiners.
    pub split_hz: f64,
    pub compression: f64,
    pub stage1_hidden: usize,
    pub low_hidden: usize,
    pub high_hidden: usize,
    /// Unidirectional recurrences when set, bidirectional otherwise.
    pub causal: bool,
    /// Start with near-unity gains and zero refinements.
    pub identity_init: bool,
}

impl MfNetConfig {
    pub fn rt() -> Self {
        Self {
            profile: SizeProfile::Rt,
            stft: StftConfig::full_band(),
            erb_bands: DEFAULT_ERB_BANDS,
            split_hz: DEFAULT_SPLIT_HZ,
            compression: DEFAULT_COMPRESSION,
            stage1_hidden: 192,
            low_hidden: 256,
            high_hidden: 384,
            causal: true,
            identity_init: true,
        }
    }

    pub fn nrt() -> Self {
        Self {
            profile: SizeProfile::Nrt,
            causal: false,
            ..Self::rt()
        }
    }

    pub fn desk() -> Self {
        Self {
            profile: SizeProfile::Custom,
            stage1_hidden: 32,
            low_hidden: 32,
            high_hidden: 48,
            ..Self::rt()
        }
    }

    /// 1.2 kHz, 13 bins, 6 ERB bands and 3-wide layers.
    pub fn tiny() -> Self {
        Self {
            profile: SizeProfile::Custom,
            stft: StftConfig::with_rate(1200).expect("valid rate"),
            erb_bands: 6,
            split_hz: 200.0,
            stage1_hidden: 3,
            low_hidden: 3,
            high_hidden: 3,
            identity_init: false,
            ..Self::rt()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        make_erb_filterbank(self.erb_bands, &self.stft)?;
        if !(self.split_hz > 0.0 && self.split_hz < self.stft.nyquist_hz()) {
            return Err(Error::config(format!(
                "split_hz {} must lie strictly between 0 and Nyquist ({} Hz)",
                self.split_hz,
                self.stft.nyquist_hz()
            )));
        }
        let k = self.split_bin();
        if k == 0 || k >= self.stft.num_bins() {
            return Err(Error::config(format!(
                "split_hz {} leaves an empty band (split bin {k} of {})",
                self.split_hz,
                self.stft.num_bins()
            )));
        }
        if self.stage1_hidden == 0 || self.low_hidden == 0 || self.high_hidden == 0 {
            return Err(Error::config("MF-Net widths must be positive"));
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return Err(Error::config("compression exponent must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn split_bin(&self) -> usize {
        (self.split_hz / self.stft.bin_hz()).round() as usize
    }

    /// Bin ranges of the low and high refiners.
    pub fn bands(&self) -> (Range<usize>, Range<usize>) {
        let k = self.split_bin();
        (0..k, k..self.stft.num_bins())
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    fn recurrent(&self, din: usize, h: usize) -> (usize, usize) {
        if self.causal {
            (Lstm::param_count(din, h), h)
        } else {
            (BiLstm::param_count(din, h), 2 * h)
        }
    }

    pub(crate) fn stage1_params(&self) -> usize {
        let (e, h) = (self.erb_bands, self.stage1_hidden);
        let (rnn, width) = self.recurrent(h, h);
        Linear::param_count(2 * e, h) + PRelu::param_count(h) + rnn + Linear::param_count(width, e)
    }

    pub(crate) fn refiner_params(&self, bins: usize, h: usize) -> usize {
        let (rnn, width) = self.recurrent(h, h);
        Linear::param_count(2 * 4 * bins, h)
            + PRelu::param_count(h)
            + rnn
            + Linear::param_count(width, 2 * bins)
    }

    /// Exact trainable-parameter count.
    pub fn param_count(&self) -> usize {
        let (lo, hi) = self.bands();
        self.stage1_params()
            + self.refiner_params(lo.len(), self.low_hidden)
            + self.refiner_params(hi.len(), self.high_hidden)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_kilohertz_split_at_full_band() {
        let c = MfNetConfig::rt();
        c.validate().unwrap();
        assert_eq!(c.bands(), (0..80, 80..481));
        let t = MfNetConfig::tiny();
        t.validate().unwrap();
        assert_eq!(t.bands(), (0..4, 4..13));
    }

    #[test]
    fn partition_covers_every_bin_once() {
        for hz in [50.0, 1000.0, 4000.0, 12_345.0, 23_950.0] {
            let c = MfNetConfig { split_hz: hz, ..MfNetConfig::rt() };
            c.validate().unwrap();
            let (lo, hi) = c.bands();
            assert_eq!(lo.start, 0);
            assert_eq!(lo.end, hi.start);
            assert_eq!(hi.end, 481);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        for hz in [0.0, -1.0, 24_000.0, 10.0] {
            let c = MfNetConfig { split_hz: hz, ..MfNetConfig::rt() };
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{hz}");
        }
        let c = MfNetConfig { erb_bands: 1, ..MfNetConfig::rt() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn nrt_is_larger() {
        assert!(MfNetConfig::nrt().param_count() > MfNetConfig::rt().param_count());
    }
}
