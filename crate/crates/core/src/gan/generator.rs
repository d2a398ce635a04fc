//! Complex-domain encoder/decoder generator with an S-TCM and TF-LSTM
//! bottleneck, operating on the three-subband stack.

use candle_core::{DType, Tensor};
use rustfft::num_complex::Complex64;

use super::config::{GeneratorConfig, ENCODER_LAYERS, STACK_CHANNELS};
use crate::dsp::{merge_subbands, split_subbands, stft, ComplexSpectrogram, SubbandStack, Waveform};
use crate::error::{Error, Result};
use crate::nn::spectral::compress_complex_host;
use crate::nn::{
    decompress_complex, BiLstm, Conv2d, Conv2dSpec, ConvTransposeF2, DepthwiseConv1d, Istft,
    LayerNorm, Linear, Lstm, PRelu, ParamStore, TimePad,
};

fn time_pad(causal: bool) -> TimePad {
    if causal {
        TimePad::Causal
    } else {
        TimePad::Same
    }
}

#[derive(Clone, Debug)]
struct DenseBlock {
    layers: Vec<(Conv2d, PRelu)>,
}

impl DenseBlock {
    fn new(ps: &mut ParamStore, name: &str, cfg: &GeneratorConfig) -> Result<Self> {
        let c = cfg.channels[0];
        ps.scoped(name, |ps| {
            let layers = cfg
                .dense_dilations()
                .into_iter()
                .enumerate()
                .map(|(i, d)| {
                    let spec = Conv2dSpec::new(c * (i + 1), c, cfg.kernel[0], cfg.kernel[1])
                        .dilation(d, 1)
                        .time_pad(time_pad(cfg.causal));
                    Ok((
                        Conv2d::new(ps, &format!("conv{i}"), spec, false)?,
                        PRelu::new(ps, &format!("act{i}"), c)?,
                    ))
                })
                .collect::<Result<_>>()?;
            Ok(Self { layers })
        })
    }

    fn dilations(&self) -> Vec<usize> {
        self.layers.iter().map(|(c, _)| c.spec().dt).collect()
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut feats = vec![x.clone()];
        for (conv, act) in &self.layers {
            let inp = if feats.len() == 1 {
                feats[0].clone()
            } else {
                crate::nn::cat(&feats, 3)?
            };
            feats.push(act.forward(&conv.forward(&inp)?)?);
        }
        Ok(feats.pop().expect("non-empty"))
    }
}

/// Squeezed temporal convolution block: pre-norm, 1×1 squeeze, dilated
/// depthwise conv over time, 1×1 expand, residual.
#[derive(Clone, Debug)]
struct STcmBlock {
    norm: LayerNorm,
    act_in: PRelu,
    squeeze: Linear,
    act_mid: PRelu,
    dw: DepthwiseConv1d,
    act_out: PRelu,
    expand: Linear,
}

impl STcmBlock {
    fn new(ps: &mut ParamStore, name: &str, cfg: &GeneratorConfig, dilation: usize) -> Result<Self> {
        let d = cfg.bottleneck_dim();
        let h = cfg.tcm_hidden;
        ps.scoped(name, |ps| {
            Ok(Self {
                norm: LayerNorm::new(ps, "norm", d)?,
                act_in: PRelu::new(ps, "act_in", d)?,
                squeeze: Linear::new(ps, "squeeze", d, h, false)?,
                act_mid: PRelu::new(ps, "act_mid", h)?,
                dw: DepthwiseConv1d::new(ps, "dw", h, cfg.tcm_kernel, dilation, cfg.causal)?,
                act_out: PRelu::new(ps, "act_out", h)?,
                expand: Linear::new(ps, "expand", h, d, false)?,
            })
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.act_in.forward(&self.norm.forward(x)?)?;
        let y = self.act_mid.forward(&self.squeeze.forward(&y)?)?;
        let y = self.act_out.forward(&self.dw.forward(&y)?)?;
        Ok((x + self.expand.forward(&y)?)?)
    }
}

#[derive(Clone, Debug)]
enum TimeRnn {
    Uni(Lstm),
    Bi(BiLstm),
}

impl TimeRnn {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            TimeRnn::Uni(l) => l.forward(x),
            TimeRnn::Bi(l) => l.forward(x),
        }
    }
}

/// Residual time-direction recurrence followed by a residual bidirectional
/// frequency-direction recurrence.
#[derive(Clone, Debug)]
struct TfLstmBlock {
    time_norm: LayerNorm,
    time_rnn: TimeRnn,
    time_proj: Linear,
    freq_norm: LayerNorm,
    freq_rnn: BiLstm,
    freq_proj: Linear,
}

impl TfLstmBlock {
    fn new(ps: &mut ParamStore, name: &str, cfg: &GeneratorConfig) -> Result<Self> {
        let c = cfg.channels[ENCODER_LAYERS - 1];
        let h = cfg.lstm_hidden;
        ps.scoped(name, |ps| {
            let (time_rnn, tw) = if cfg.causal {
                (TimeRnn::Uni(Lstm::new(ps, "time_rnn", c, h)?), h)
            } else {
                (TimeRnn::Bi(BiLstm::new(ps, "time_rnn", c, h)?), 2 * h)
            };
            Ok(Self {
                time_norm: LayerNorm::new(ps, "time_norm", c)?,
                time_rnn,
                time_proj: Linear::new(ps, "time_proj", tw, c, false)?,
                freq_norm: LayerNorm::new(ps, "freq_norm", c)?,
                freq_rnn: BiLstm::new(ps, "freq_rnn", c, h)?,
                freq_proj: Linear::new(ps, "freq_proj", 2 * h, c, false)?,
            })
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, f, c) = x.dims4()?;
        let xt = self
            .time_norm
            .forward(x)?
            .permute((0, 2, 1, 3))?
            .contiguous()?
            .reshape((b * f, t, c))?;
        let yt = self.time_proj.forward(&self.time_rnn.forward(&xt)?)?;
        let yt = yt.reshape((b, f, t, c))?.permute((0, 2, 1, 3))?;
        let x = (x + yt)?;
        let xf = self.freq_norm.forward(&x)?.reshape((b * t, f, c))?;
        let yf = self.freq_proj.forward(&self.freq_rnn.forward(&xf)?)?;
        Ok((x + yf.reshape((b, t, f, c))?)?)
    }
}

/// Layer counts and dilations read back from a built generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorStructure {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub dense_blocks: Vec<Vec<usize>>,
    pub s_tcm_groups: Vec<Vec<usize>>,
    pub tf_lstm_blocks: usize,
}

/// Compressed generator input for a batch of equal-length waveforms.
#[derive(Clone, Debug)]
pub struct StackBatch {
    /// `(B, T, bins_per_band, 6)`.
    pub input: Tensor,
    /// Uncompressed Nyquist column, `(B, T, 1)` each.
    pub nyq_re: Tensor,
    pub nyq_im: Tensor,
    pub num_samples: usize,
}

#[derive(Clone, Debug)]
pub struct Generator {
    cfg: GeneratorConfig,
    encoder: Vec<(Conv2d, PRelu)>,
    enc_dense: DenseBlock,
    tcm: Vec<Vec<STcmBlock>>,
    tf: Vec<TfLstmBlock>,
    dec_dense: DenseBlock,
    /// Ordered from the bottleneck outwards; all but the last carry a PReLU.
    decoder: Vec<(ConvTransposeF2, Option<PRelu>)>,
    istft: Istft,
    dtype: DType,
}

impl Generator {
    pub fn new(ps: &mut ParamStore, cfg: &GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let kt = cfg.kernel[0];
        ps.scoped("gen", |ps| {
            let mut encoder = Vec::new();
            for i in 0..ENCODER_LAYERS {
                let cin = if i == 0 { STACK_CHANNELS } else { c[i - 1] };
                let spec = Conv2dSpec::new(cin, c[i], kt, cfg.kernel[1])
                    .stride_f(2)
                    .time_pad(time_pad(cfg.causal));
                encoder.push((
                    Conv2d::new(ps, &format!("enc{i}"), spec, false)?,
                    PRelu::new(ps, &format!("enc{i}_act"), c[i])?,
                ));
            }
            let enc_dense = DenseBlock::new(ps, "enc_dense", cfg)?;
            let mut tcm = Vec::new();
            for g in 0..cfg.s_tcm_groups {
                let blocks = cfg
                    .block_dilations()
                    .into_iter()
                    .enumerate()
                    .map(|(j, d)| STcmBlock::new(ps, &format!("tcm{g}.block{j}"), cfg, d))
                    .collect::<Result<Vec<_>>>()?;
                tcm.push(blocks);
            }
            let tf = (0..cfg.tf_lstm_blocks)
                .map(|i| TfLstmBlock::new(ps, &format!("tf{i}"), cfg))
                .collect::<Result<Vec<_>>>()?;
            let dec_dense = DenseBlock::new(ps, "dec_dense", cfg)?;
            let mut decoder = Vec::new();
            for i in (0..ENCODER_LAYERS).rev() {
                let cout = if i == 0 { STACK_CHANNELS } else { c[i - 1] };
                let head = i == 0;
                let conv = ConvTransposeF2::new(
                    ps,
                    &format!("dec{i}"),
                    2 * c[i],
                    cout,
                    kt,
                    head && cfg.zero_init_head,
                )?;
                let act = if head {
                    None
                } else {
                    Some(PRelu::new(ps, &format!("dec{i}_act"), cout)?)
                };
                decoder.push((conv, act));
            }
            Ok(Self {
                cfg: cfg.clone(),
                encoder,
                enc_dense,
                tcm,
                tf,
                dec_dense,
                decoder,
                istft: Istft::new(&cfg.stft, ps.dtype())?,
                dtype: ps.dtype(),
            })
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn structure(&self) -> GeneratorStructure {
        GeneratorStructure {
            encoder_layers: self.encoder.len(),
            decoder_layers: self.decoder.len(),
            dense_blocks: vec![self.enc_dense.dilations(), self.dec_dense.dilations()],
            s_tcm_groups: self
                .tcm
                .iter()
                .map(|g| g.iter().map(|b| b.dw.dilation()).collect())
                .collect(),
            tf_lstm_blocks: self.tf.len(),
        }
    }

    /// `(B, T, bins_per_band, 6)` compressed stack to a restored stack of the
    /// same shape.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, f, ch) = x.dims4()?;
        let sizes = self.cfg.freq_sizes();
        if f != sizes[0] || ch != STACK_CHANNELS {
            return Err(Error::validation(format!(
                "generator expects (B, T, {}, {STACK_CHANNELS}) input, got {:?}",
                sizes[0],
                x.dims()
            )));
        }
        let mut skips = Vec::with_capacity(ENCODER_LAYERS);
        let mut h = x.clone();
        for (i, (conv, act)) in self.encoder.iter().enumerate() {
            h = act.forward(&conv.forward(&h)?)?;
            if i == 0 {
                h = self.enc_dense.forward(&h)?;
            }
            skips.push(h.clone());
        }
        let (b, t, f5, c5) = h.dims4()?;
        let mut z = h.reshape((b, t, f5 * c5))?;
        for group in &self.tcm {
            for block in group {
                z = block.forward(&z)?;
            }
        }
        h = z.reshape((b, t, f5, c5))?;
        for block in &self.tf {
            h = block.forward(&h)?;
        }
        for (k, (conv, act)) in self.decoder.iter().enumerate() {
            let i = ENCODER_LAYERS - 1 - k;
            let inp = crate::nn::cat(&[&h, &skips[i]], 3)?;
            h = conv.forward(&inp)?;
            if h.dim(2)? != sizes[i] {
                h = h.narrow(2, 0, sizes[i])?;
            }
            if let Some(a) = act {
                h = a.forward(&h)?;
            }
            if i == 1 {
                h = self.dec_dense.forward(&h)?;
            }
        }
        Ok((x + h)?)
    }

    /// Host STFT, subband split and compression for equal-length waveforms.
    pub fn prepare(&self, waves: &[&Waveform], dtype: DType) -> Result<StackBatch> {
        let first = waves.first().ok_or_else(|| Error::validation("empty batch"))?;
        let n = first.len();
        let mut input = Vec::new();
        let mut nre = Vec::new();
        let mut nim = Vec::new();
        let mut frames = 0;
        let fb = self.cfg.bins_per_band();
        for w in waves {
            if w.len() != n {
                return Err(Error::validation("batch waveforms must share a length"));
            }
            let spec = stft(w, &self.cfg.stft)?;
            let (stack, nyq) = split_subbands(&spec)?;
            frames = stack.frames();
            for pair in stack.data().chunks(2) {
                let (r, i) = compress_complex_host(pair[0], pair[1], self.cfg.compression);
                input.push(r);
                input.push(i);
            }
            nre.extend(nyq.iter().map(|c| c.re));
            nim.extend(nyq.iter().map(|c| c.im));
        }
        let b = waves.len();
        let dev = candle_core::Device::Cpu;
        let mk = |v: Vec<f64>, s: &[usize]| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, s, &dev)?.to_dtype(dtype)?)
        };
        Ok(StackBatch {
            input: mk(input, &[b, frames, fb, STACK_CHANNELS])?,
            nyq_re: mk(nre, &[b, frames, 1])?,
            nyq_im: mk(nim, &[b, frames, 1])?,
            num_samples: n,
        })
    }

    /// Decompress a generator output stack into full-band `(B, T, F)` parts,
    /// appending the untouched Nyquist column.
    pub fn full_spectrum(&self, out: &Tensor, batch: &StackBatch) -> Result<(Tensor, Tensor)> {
        let (b, t, fb, _) = out.dims4()?;
        let pairs = out.reshape((b, t, fb, 3, 2))?;
        let re = pairs.narrow(4, 0, 1)?.squeeze(4)?;
        let im = pairs.narrow(4, 1, 1)?.squeeze(4)?;
        let (re, im) = decompress_complex(&re, &im, self.cfg.compression)?;
        let flat = |x: Tensor| -> Result<Tensor> {
            Ok(x.permute((0, 1, 3, 2))?.contiguous()?.reshape((b, t, 3 * fb))?)
        };
        let re = crate::nn::cat(&[flat(re)?, batch.nyq_re.clone()], 2)?;
        let im = crate::nn::cat(&[flat(im)?, batch.nyq_im.clone()], 2)?;
        Ok((re, im))
    }

    /// Restored waveforms `(B, L)` with the graph attached for training.
    pub fn forward_batch(&self, batch: &StackBatch) -> Result<Tensor> {
        let out = self.forward(&batch.input)?;
        let (re, im) = self.full_spectrum(&out, batch)?;
        self.istft.forward(&re, &im, batch.num_samples)
    }

    /// Restore a subband stack; the Nyquist column passes through unchanged.
    pub fn forward_stack(&self, stack: &SubbandStack, nyquist: &[Complex64]) -> Result<ComplexSpectrogram> {
        let fb = self.cfg.bins_per_band();
        if stack.bins_per_band() != fb || stack.config() != &self.cfg.stft {
            return Err(Error::validation(format!(
                "stack has {} bins per band, generator expects {fb}",
                stack.bins_per_band()
            )));
        }
        let t = stack.frames();
        let mut input = Vec::with_capacity(stack.data().len());
        for pair in stack.data().chunks(2) {
            let (r, i) = compress_complex_host(pair[0], pair[1], self.cfg.compression);
            input.push(r);
            input.push(i);
        }
        let dtype = self.dtype;
        let x = Tensor::from_vec(input, (1, t, fb, STACK_CHANNELS), &candle_core::Device::Cpu)?
            .to_dtype(dtype)?;
        let out = self.forward(&x)?;
        let pairs = out.reshape((1, t, fb, 3, 2))?;
        let (re, im) = decompress_complex(
            &pairs.narrow(4, 0, 1)?.squeeze(4)?,
            &pairs.narrow(4, 1, 1)?.squeeze(4)?,
            self.cfg.compression,
        )?;
        let re: Vec<f64> = re.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let im: Vec<f64> = im.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let data: Vec<f64> = re.iter().zip(&im).flat_map(|(&a, &b)| [a, b]).collect();
        let restored = SubbandStack::new(t, data, stack.config().clone(), stack.num_samples())?;
        merge_subbands(&restored, nyquist)
    }

    /// Waveform in, restored waveform out (evaluation path).
    pub fn restore(&self, wave: &Waveform) -> Result<Waveform> {
        let spec = stft(wave, &self.cfg.stft)?;
        let (stack, nyq) = split_subbands(&spec)?;
        let out = self.forward_stack(&stack, &nyq)?;
        crate::dsp::istft(&out, &self.cfg.stft)
    }
}
