//! Multi-resolution STFT discriminators. Every member shares one layer
//! topology and differs only in its analysis resolution.

use candle_core::Tensor;

use super::config::DiscriminatorBankConfig;
use crate::dsp::mrstft::StftResolution;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::nn::{leaky_relu, Conv2d, Conv2dSpec, MagnitudeStft, ParamStore, TimePad};

const SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct DiscOutput {
    /// `(B, T, F', 1)` per-patch realness.
    pub score: Tensor,
    /// Hidden activations in layer order.
    pub features: Vec<Tensor>,
}

#[derive(Clone, Debug)]
struct ResolutionDiscriminator {
    stft: MagnitudeStft,
    hidden: Vec<Conv2d>,
    out: Conv2d,
    compression: f64,
}

impl ResolutionDiscriminator {
    fn new(ps: &mut ParamStore, name: &str, res: StftResolution, cfg: &DiscriminatorBankConfig) -> Result<Self> {
        let c = cfg.channels;
        ps.scoped(name, |ps| {
            let same = |s: Conv2dSpec| s.time_pad(TimePad::Same);
            let mut hidden = vec![Conv2d::new(ps, "conv_in", same(Conv2dSpec::new(1, c, 3, 9)), false)?];
            for i in 0..cfg.strided_layers {
                hidden.push(Conv2d::new(
                    ps,
                    &format!("conv{i}"),
                    same(Conv2dSpec::new(c, c, 3, 9).stride_f(2)),
                    false,
                )?);
            }
            hidden.push(Conv2d::new(ps, "conv_post", same(Conv2dSpec::new(c, c, 3, 3)), false)?);
            let out = Conv2d::new(ps, "conv_out", same(Conv2dSpec::new(c, 1, 3, 3)), false)?;
            Ok(Self {
                stft: MagnitudeStft::new(res, ps.dtype())?,
                hidden,
                out,
                compression: cfg.compression,
            })
        })
    }

    fn forward(&self, x: &Tensor) -> Result<DiscOutput> {
        let mag = self.stft.forward(x)?;
        let mut h = mag.log()?.affine(self.compression, 0.0)?.exp()?.unsqueeze(3)?;
        let mut features = Vec::with_capacity(self.hidden.len());
        for conv in &self.hidden {
            h = leaky_relu(&conv.forward(&h)?, SLOPE)?;
            features.push(h.clone());
        }
        Ok(DiscOutput {
            score: self.out.forward(&h)?,
            features,
        })
    }
}

#[derive(Clone, Debug)]
pub struct DiscriminatorBank {
    cfg: DiscriminatorBankConfig,
    discs: Vec<ResolutionDiscriminator>,
}

impl DiscriminatorBank {
    pub fn new(ps: &mut ParamStore, cfg: &DiscriminatorBankConfig) -> Result<Self> {
        cfg.validate()?;
        ps.scoped("disc", |ps| {
            let discs = cfg
                .resolutions
                .iter()
                .enumerate()
                .map(|(i, r)| ResolutionDiscriminator::new(ps, &format!("res{i}"), *r, cfg))
                .collect::<Result<_>>()?;
            Ok(Self {
                cfg: cfg.clone(),
                discs,
            })
        })
    }

    pub fn config(&self) -> &DiscriminatorBankConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.discs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discs.is_empty()
    }

    /// `(B, L)` waveforms to one output per resolution.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<DiscOutput>> {
        let len = x.dim(1)?;
        if len < self.cfg.max_fft() {
            return Err(Error::validation(format!(
                "discriminator input of {len} samples is shorter than the largest window {}",
                self.cfg.max_fft()
            )));
        }
        self.discs.iter().map(|d| d.forward(x)).collect()
    }

    pub fn forward_wave(&self, wave: &Waveform, dtype: candle_core::DType) -> Result<Vec<DiscOutput>> {
        let x = Tensor::from_slice(wave.samples(), (1, wave.len()), &candle_core::Device::Cpu)?
            .to_dtype(dtype)?;
        self.forward(&x)
    }
}
