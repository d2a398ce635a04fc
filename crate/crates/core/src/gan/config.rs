use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::mrstft::{StftResolution, DEFAULT_RESOLUTIONS};
use crate::dsp::{StftConfig, DEFAULT_COMPRESSION, NUM_SUBBANDS};
use crate::error::{Error, Result};
use crate::nn::params::hex;
use crate::nn::{
    BiLstm, Conv2dSpec, ConvTransposeF2, DepthwiseConv1d, LayerNorm, Linear, Lstm, PRelu,
};

pub const ENCODER_LAYERS: usize = 5;
pub const DENSE_DEPTH: usize = 5;
pub const S_TCM_GROUPS: usize = 5;
pub const BLOCKS_PER_GROUP: usize = 4;
pub const TF_LSTM_BLOCKS: usize = 2;
/// Channels of the generator input and output: 3 subbands × (re, im).
pub const STACK_CHANNELS: usize = 2 * NUM_SUBBANDS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeProfile {
    Rt,
    Nrt,
    Custom,
}

/// SHA-256 of the canonical JSON encoding.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let text = serde_json::to_string(&serde_json::to_value(cfg)?)?;
    Ok(hex(&Sha256::digest(text.as_bytes())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub profile: SizeProfile,
    pub stft: StftConfig,
    /// Output channels of the five encoder layers.
    pub channels: [usize; ENCODER_LAYERS],
    /// (time, frequency) kernel of encoder, decoder and dense layers.
    pub kernel: [usize; 2],
    pub dense_depth: usize,
    pub s_tcm_groups: usize,
    pub blocks_per_group: usize,
    pub dilation_base: usize,
    /// Width of the squeezed branch inside each S-TCM block.
    pub tcm_hidden: usize,
    pub tcm_kernel: usize,
    pub tf_lstm_blocks: usize,
    pub lstm_hidden: usize,
    pub causal: bool,
    /// Power-law exponent applied to complex spectra around the network.
    pub compression: f64,
    /// Zero the last decoder layer so an untrained generator is the identity.
    pub zero_init_head: bool,
}

impl GeneratorConfig {
    pub fn rt() -> Self {
        Self {
            profile: SizeProfile::Rt,
            stft: StftConfig::full_band(),
            channels: [64, 64, 96, 128, 128],
            kernel: [2, 3],
            dense_depth: DENSE_DEPTH,
            s_tcm_groups: S_TCM_GROUPS,
            blocks_per_group: BLOCKS_PER_GROUP,
            dilation_base: 2,
            tcm_hidden: 384,
            tcm_kernel: 3,
            tf_lstm_blocks: TF_LSTM_BLOCKS,
            lstm_hidden: 128,
            causal: true,
            compression: DEFAULT_COMPRESSION,
            zero_init_head: true,
        }
    }

    pub fn nrt() -> Self {
        Self {
            profile: SizeProfile::Nrt,
            channels: [64, 80, 112, 144, 144],
            tcm_hidden: 352,
            lstm_hidden: 144,
            causal: false,
            ..Self::rt()
        }
    }

    /// rt topology with narrow layers, for desk-scale training.
    pub fn desk() -> Self {
        Self {
            profile: SizeProfile::Custom,
            channels: [8, 8, 12, 16, 16],
            tcm_hidden: 32,
            lstm_hidden: 16,
            ..Self::rt()
        }
    }

    /// 1.2 kHz, 13 bins, two channels everywhere: small enough for
    /// finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            profile: SizeProfile::Custom,
            stft: StftConfig::with_rate(1200).expect("valid rate"),
            channels: [2; ENCODER_LAYERS],
            tcm_hidden: 3,
            lstm_hidden: 2,
            zero_init_head: false,
            ..Self::rt()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        crate::dsp::subband::bins_per_band(&self.stft)?;
        if self.dense_depth != DENSE_DEPTH
            || self.s_tcm_groups != S_TCM_GROUPS
            || self.blocks_per_group != BLOCKS_PER_GROUP
            || self.tf_lstm_blocks != TF_LSTM_BLOCKS
        {
            return Err(Error::config(format!(
                "generator topology is fixed: dense depth {DENSE_DEPTH}, {S_TCM_GROUPS} S-TCM groups of \
                 {BLOCKS_PER_GROUP} blocks, {TF_LSTM_BLOCKS} TF-LSTM blocks"
            )));
        }
        if self.channels.contains(&0) || self.tcm_hidden == 0 || self.lstm_hidden == 0 {
            return Err(Error::config("generator widths must be positive"));
        }
        if self.kernel != [2, 3] {
            return Err(Error::config("generator kernel must be [2, 3]"));
        }
        if self.dilation_base < 2 || self.tcm_kernel < 2 {
            return Err(Error::config("dilation base and S-TCM kernel must be at least 2"));
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return Err(Error::config("compression exponent must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn bins_per_band(&self) -> usize {
        (self.stft.num_bins() - 1) / NUM_SUBBANDS
    }

    /// Frequency sizes at the input of each encoder layer plus the bottleneck.
    pub fn freq_sizes(&self) -> [usize; ENCODER_LAYERS + 1] {
        let mut s = [self.bins_per_band(); ENCODER_LAYERS + 1];
        for i in 1..=ENCODER_LAYERS {
            s[i] = s[i - 1].div_ceil(2);
        }
        s
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.channels[ENCODER_LAYERS - 1] * self.freq_sizes()[ENCODER_LAYERS]
    }

    pub fn dense_dilations(&self) -> Vec<usize> {
        (0..self.dense_depth).map(|i| 1 << i).collect()
    }

    pub fn block_dilations(&self) -> Vec<usize> {
        (0..self.blocks_per_group as u32)
            .map(|i| self.dilation_base.pow(i))
            .collect()
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    /// Exact trainable-parameter count, derived layer by layer without
    /// building the model.
    pub fn param_count(&self) -> usize {
        let c = self.channels;
        let conv = |cin: usize, cout: usize| Conv2dSpec::new(cin, cout, self.kernel[0], self.kernel[1]).param_count();
        let mut n = conv(STACK_CHANNELS, c[0]) + PRelu::param_count(c[0]);
        for i in 1..ENCODER_LAYERS {
            n += conv(c[i - 1], c[i]) + PRelu::param_count(c[i]);
        }
        let dense: usize = (0..self.dense_depth)
            .map(|i| conv(c[0] * (i + 1), c[0]) + PRelu::param_count(c[0]))
            .sum();
        n += 2 * dense;
        let d = self.bottleneck_dim();
        let h = self.tcm_hidden;
        let block = LayerNorm::param_count(d)
            + PRelu::param_count(d)
            + Linear::param_count(d, h)
            + PRelu::param_count(h)
            + DepthwiseConv1d::param_count(h, self.tcm_kernel)
            + PRelu::param_count(h)
            + Linear::param_count(h, d);
        n += self.s_tcm_groups * self.blocks_per_group * block;
        let c5 = c[ENCODER_LAYERS - 1];
        let hl = self.lstm_hidden;
        let time = if self.causal {
            Lstm::param_count(c5, hl) + Linear::param_count(hl, c5)
        } else {
            BiLstm::param_count(c5, hl) + Linear::param_count(2 * hl, c5)
        };
        let freq = BiLstm::param_count(c5, hl) + Linear::param_count(2 * hl, c5);
        n += self.tf_lstm_blocks * (2 * LayerNorm::param_count(c5) + time + freq);
        for i in (0..ENCODER_LAYERS).rev() {
            let cout = if i == 0 { STACK_CHANNELS } else { c[i - 1] };
            n += ConvTransposeF2::param_count(2 * c[i], cout, self.kernel[0]);
            if i > 0 {
                n += PRelu::param_count(cout);
            }
        }
        n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorBankConfig {
    pub resolutions: Vec<StftResolution>,
    pub channels: usize,
    /// Frequency-strided layers between the input and output convolutions.
    pub strided_layers: usize,
    pub compression: f64,
}

impl Default for DiscriminatorBankConfig {
    fn default() -> Self {
        Self {
            resolutions: DEFAULT_RESOLUTIONS.to_vec(),
            channels: 32,
            strided_layers: 3,
            compression: DEFAULT_COMPRESSION,
        }
    }
}

impl DiscriminatorBankConfig {
    pub fn validate(&self) -> Result<()> {
        let mut distinct = self.resolutions.clone();
        distinct.sort_by_key(|r| (r.fft, r.hop, r.win));
        distinct.dedup();
        if distinct.len() < 2 || distinct.len() != self.resolutions.len() {
            return Err(Error::config(
                "the discriminator bank needs at least two distinct resolutions",
            ));
        }
        for r in &self.resolutions {
            r.validate()?;
        }
        if self.channels == 0 {
            return Err(Error::config("discriminator channels must be positive"));
        }
        Ok(())
    }

    pub fn max_fft(&self) -> usize {
        self.resolutions.iter().map(|r| r.fft).max().unwrap_or(0)
    }
}

/// Weights of the generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub mrstft: f64,
    pub wave: f64,
    pub adv: f64,
    pub fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mrstft: 1.0,
            wave: 10.0,
            adv: 1.0,
            fm: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.mrstft > 0.0 && self.wave > 0.0) {
            return Err(Error::config("reconstruction weights must be positive"));
        }
        if !(self.adv >= 0.0 && self.fm >= 0.0) {
            return Err(Error::config("adversarial weights must be non-negative"));
        }
        Ok(())
    }
}
