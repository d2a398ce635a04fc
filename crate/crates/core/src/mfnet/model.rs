//! Two-stage enhancer: ERB-domain coarse gains, then separate low- and
//! high-band refiners adding complex corrections.

use candle_core::{DType, Device, Tensor};
use rustfft::num_complex::Complex64;

use super::config::MfNetConfig;
use crate::dsp::{make_erb_filterbank, stft, ComplexSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::nn::spectral::COMPLEX_EPS;
use crate::nn::{
    compress_complex, decompress_complex, sigmoid, BiLstm, Init, Istft, Linear, Lstm, PRelu,
    ParamStore,
};

const IDENTITY_GAIN_BIAS: f64 = 4.0;

#[derive(Clone, Debug)]
enum Recurrent {
    Uni(Lstm),
    Bi(BiLstm),
}

impl Recurrent {
    fn new(ps: &mut ParamStore, name: &str, causal: bool, din: usize, h: usize) -> Result<(Self, usize)> {
        Ok(if causal {
            (Recurrent::Uni(Lstm::new(ps, name, din, h)?), h)
        } else {
            (Recurrent::Bi(BiLstm::new(ps, name, din, h)?), 2 * h)
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Recurrent::Uni(l) => l.forward(x),
            Recurrent::Bi(l) => l.forward(x),
        }
    }
}

/// `[x_t, x_{t−1}]` followed by a linear map: a causal kernel-2 temporal
/// convolution over `(B, T, D)`.
fn pair_frames(x: &Tensor) -> Result<Tensor> {
    let (b, t, d) = x.dims3()?;
    let prev = if t > 1 {
        crate::nn::cat(&[&Tensor::zeros((b, 1, d), x.dtype(), x.device())?, &x.narrow(1, 0, t - 1)?], 1)?
    } else {
        x.zeros_like()?
    };
    crate::nn::cat(&[x, &prev], 2)
}

/// Conv → PReLU → recurrence → linear head, on `(B, T, D)` sequences.
#[derive(Clone, Debug)]
struct Subnet {
    input: Linear,
    act: PRelu,
    rnn: Recurrent,
    head: Linear,
    din: usize,
}

impl Subnet {
    fn new(ps: &mut ParamStore, name: &str, cfg: &MfNetConfig, din: usize, h: usize, head: (usize, Init, Init)) -> Result<Self> {
        ps.scoped(name, |ps| {
            let input = Linear::new(ps, "conv", 2 * din, h, false)?;
            let act = PRelu::new(ps, "act", h)?;
            let (rnn, width) = Recurrent::new(ps, "rnn", cfg.causal, h, h)?;
            let head = Linear::with_init(ps, "head", width, head.0, head.1, head.2)?;
            Ok(Self { input, act, rnn, head, din })
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.dim(2)? != self.din {
            return Err(Error::validation(format!(
                "subnet expects {} features per frame, got {:?}",
                self.din,
                x.dims()
            )));
        }
        let h = self.act.forward(&self.input.forward(&pair_frames(x)?)?)?;
        self.head.forward(&self.rnn.forward(&h)?)
    }
}

/// Full-band spectra of a batch of equal-length waveforms, `(B, T, F)` each.
#[derive(Clone, Debug)]
pub struct SpecBatch {
    pub re: Tensor,
    pub im: Tensor,
    pub num_samples: usize,
}

/// Every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct MfNetOutput {
    /// `(B, T, erb_bands)`, each in `[0, 1]`.
    pub gains: Tensor,
    pub coarse_re: Tensor,
    pub coarse_im: Tensor,
    pub re: Tensor,
    pub im: Tensor,
}

#[derive(Clone, Debug)]
pub struct MfNet {
    cfg: MfNetConfig,
    /// `(F, E)` analysis weights.
    erb: Tensor,
    /// `(E, F)` column-normalized expansion.
    expand: Tensor,
    stage1: Subnet,
    low: Subnet,
    high: Subnet,
    istft: Istft,
    dtype: DType,
}

impl MfNet {
    pub fn new(ps: &mut ParamStore, cfg: &MfNetConfig) -> Result<Self> {
        cfg.validate()?;
        let fbank = make_erb_filterbank(cfg.erb_bands, &cfg.stft)?;
        let (e, f) = (fbank.n_bands(), fbank.bins());
        let dev = Device::Cpu;
        let dtype = ps.dtype();
        let erb = Tensor::from_vec(fbank.weights().to_vec(), (e, f), &dev)?
            .t()?
            .contiguous()?
            .to_dtype(dtype)?;
        let expand = Tensor::from_vec(fbank.expansion_matrix(), (f, e), &dev)?
            .t()?
            .contiguous()?
            .to_dtype(dtype)?;
        let (lo, hi) = cfg.bands();
        ps.scoped("mfnet", |ps| {
            let stage1_head = if cfg.identity_init {
                (e, Init::Zeros, Init::Const(IDENTITY_GAIN_BIAS))
            } else {
                let w = cfg.stage1_hidden * if cfg.causal { 1 } else { 2 };
                (e, Init::FanIn(w), Init::FanIn(w))
            };
            let refiner_head = |bins: usize, h: usize| {
                let w = h * if cfg.causal { 1 } else { 2 };
                if cfg.identity_init {
                    (2 * bins, Init::Zeros, Init::Zeros)
                } else {
                    (2 * bins, Init::FanIn(w), Init::FanIn(w))
                }
            };
            Ok(Self {
                stage1: Subnet::new(ps, "stage1", cfg, e, cfg.stage1_hidden, stage1_head)?,
                low: Subnet::new(ps, "low", cfg, 4 * lo.len(), cfg.low_hidden, refiner_head(lo.len(), cfg.low_hidden))?,
                high: Subnet::new(ps, "high", cfg, 4 * hi.len(), cfg.high_hidden, refiner_head(hi.len(), cfg.high_hidden))?,
                cfg: cfg.clone(),
                erb,
                expand,
                istft: Istft::new(&cfg.stft, dtype)?,
                dtype,
            })
        })
    }

    pub fn config(&self) -> &MfNetConfig {
        &self.cfg
    }

    /// Compressed ERB magnitudes `(B, T, E)` of a `(B, T, F)` spectrum.
    pub fn erb_features(&self, re: &Tensor, im: &Tensor) -> Result<Tensor> {
        let mag = ((re.sqr()? + im.sqr()?)? + COMPLEX_EPS)?.sqrt()?;
        let bands = mag.broadcast_matmul(&self.erb)?;
        Ok(((bands + COMPLEX_EPS)?.log()?.affine(self.cfg.compression, 0.0)?).exp()?)
    }

    /// Coarse per-band gains in `[0, 1]` from `(B, T, E)` features.
    pub fn stage1_forward(&self, features: &Tensor) -> Result<Tensor> {
        sigmoid(&self.stage1.forward(features)?)
    }

    /// Per-bin gains `(B, T, F)` from per-band gains.
    pub fn expand_gains(&self, gains: &Tensor) -> Result<Tensor> {
        Ok(gains.broadcast_matmul(&self.expand)?)
    }

    /// Refine a coarse spectrum given the stage input; `(B, T, F)` parts.
    pub fn stage2_forward(
        &self,
        coarse_re: &Tensor,
        coarse_im: &Tensor,
        re: &Tensor,
        im: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let c = self.cfg.compression;
        let (cc_re, cc_im) = compress_complex(coarse_re, coarse_im, c)?;
        let (cx_re, cx_im) = compress_complex(re, im, c)?;
        let (lo, hi) = self.cfg.bands();
        let mut out_re = Vec::with_capacity(2);
        let mut out_im = Vec::with_capacity(2);
        for (range, net) in [(lo, &self.low), (hi, &self.high)] {
            let n = range.len();
            let band = |x: &Tensor| x.narrow(2, range.start, n);
            let (br, bi) = (band(&cc_re)?, band(&cc_im)?);
            let feats = crate::nn::cat(&[&br, &bi, &band(&cx_re)?, &band(&cx_im)?], 2)?;
            let delta = net.forward(&feats)?;
            let r = (br + delta.narrow(2, 0, n)?)?;
            let i = (bi + delta.narrow(2, n, n)?)?;
            out_re.push(r);
            out_im.push(i);
        }
        let r = crate::nn::cat(&out_re, 2)?;
        let i = crate::nn::cat(&out_im, 2)?;
        decompress_complex(&r, &i, c)
    }

    pub fn forward_spectrum(&self, re: &Tensor, im: &Tensor) -> Result<MfNetOutput> {
        let f = self.cfg.stft.num_bins();
        if re.dims() != im.dims() || re.rank() != 3 || re.dim(2)? != f {
            return Err(Error::validation(format!(
                "MF-Net expects (B, T, {f}) spectra, got {:?} and {:?}",
                re.dims(),
                im.dims()
            )));
        }
        let gains = self.stage1_forward(&self.erb_features(re, im)?)?;
        let g = self.expand_gains(&gains)?;
        let coarse_re = (re * &g)?;
        let coarse_im = (im * &g)?;
        let (out_re, out_im) = self.stage2_forward(&coarse_re, &coarse_im, re, im)?;
        Ok(MfNetOutput {
            gains,
            coarse_re,
            coarse_im,
            re: out_re,
            im: out_im,
        })
    }

    /// Host STFT of equal-length waveforms.
    pub fn prepare(&self, waves: &[&Waveform]) -> Result<SpecBatch> {
        let first = waves.first().ok_or_else(|| Error::validation("empty batch"))?;
        let n = first.len();
        let mut re = Vec::new();
        let mut im = Vec::new();
        let mut frames = 0;
        for w in waves {
            if w.len() != n {
                return Err(Error::validation("batch waveforms must share a length"));
            }
            let spec = stft(w, &self.cfg.stft)?;
            frames = spec.frames();
            re.extend(spec.data().iter().map(|c| c.re));
            im.extend(spec.data().iter().map(|c| c.im));
        }
        let shape = (waves.len(), frames, self.cfg.stft.num_bins());
        let dev = Device::Cpu;
        Ok(SpecBatch {
            re: Tensor::from_vec(re, shape, &dev)?.to_dtype(self.dtype)?,
            im: Tensor::from_vec(im, shape, &dev)?.to_dtype(self.dtype)?,
            num_samples: n,
        })
    }

    /// Enhanced waveforms `(B, L)` with the graph attached.
    pub fn forward_batch(&self, batch: &SpecBatch) -> Result<Tensor> {
        let out = self.forward_spectrum(&batch.re, &batch.im)?;
        self.istft.forward(&out.re, &out.im, batch.num_samples)
    }

    /// Coarse-only and refined waveforms for a batch.
    pub fn forward_batch_stages(&self, batch: &SpecBatch) -> Result<(Tensor, Tensor)> {
        let out = self.forward_spectrum(&batch.re, &batch.im)?;
        Ok((
            self.istft.forward(&out.coarse_re, &out.coarse_im, batch.num_samples)?,
            self.istft.forward(&out.re, &out.im, batch.num_samples)?,
        ))
    }

    fn to_wave(&self, t: &Tensor, like: &Waveform) -> Result<Waveform> {
        let v: Vec<f32> = t.squeeze(0)?.to_dtype(DType::F32)?.to_vec1()?;
        like.with_samples(v)
    }

    pub fn enhance(&self, wave: &Waveform) -> Result<Waveform> {
        let y = self.forward_batch(&self.prepare(&[wave])?)?;
        self.to_wave(&y, wave)
    }

    /// `(coarse, refined)` waveforms.
    pub fn enhance_stages(&self, wave: &Waveform) -> Result<(Waveform, Waveform)> {
        let (c, r) = self.forward_batch_stages(&self.prepare(&[wave])?)?;
        Ok((self.to_wave(&c, wave)?, self.to_wave(&r, wave)?))
    }

    /// Refined spectrogram for a host spectrogram.
    pub fn enhance_spectrogram(&self, spec: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
        if spec.config() != &self.cfg.stft {
            return Err(Error::validation("spectrogram STFT config differs from the model's"));
        }
        let shape = (1, spec.frames(), spec.bins());
        let dev = Device::Cpu;
        let re = Tensor::from_vec(spec.data().iter().map(|c| c.re).collect::<Vec<_>>(), shape, &dev)?.to_dtype(self.dtype)?;
        let im = Tensor::from_vec(spec.data().iter().map(|c| c.im).collect::<Vec<_>>(), shape, &dev)?.to_dtype(self.dtype)?;
        let out = self.forward_spectrum(&re, &im)?;
        let re: Vec<f64> = out.re.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let im: Vec<f64> = out.im.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let data = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
        ComplexSpectrogram::new(spec.frames(), data, spec.config().clone(), spec.num_samples())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::mrstft::StftResolution;
    use crate::dsp::synth;
    use crate::nn::{check_gradients, waveform_loss, MrStftLoss};

    fn build(cfg: &MfNetConfig, dtype: DType) -> (ParamStore, MfNet) {
        let mut ps = ParamStore::new(3, dtype);
        let m = MfNet::new(&mut ps, cfg).unwrap();
        (ps, m)
    }

    fn flat(t: &Tensor) -> Vec<f64> {
        t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
    }

    #[test]
    fn analytic_count_matches_built_model() {
        for cfg in [
            MfNetConfig::desk(),
            MfNetConfig::tiny(),
            MfNetConfig { causal: false, ..MfNetConfig::desk() },
        ] {
            let (ps, _) = build(&cfg, DType::F32);
            assert_eq!(ps.count_prefix("mfnet."), cfg.param_count());
            assert_eq!(ps.count(), cfg.param_count());
        }
    }

    #[test]
    fn gains_are_bounded_and_shaped() {
        let cfg = MfNetConfig { identity_init: false, ..MfNetConfig::desk() };
        let (ps, m) = build(&cfg, DType::F32);
        let x = ps_input(&ps, (2, 7, 64), 30.0);
        let g = m.stage1_forward(&x).unwrap();
        assert_eq!(g.dims(), &[2, 7, 64]);
        let v = flat(&g);
        assert!(v.iter().all(|&a| (0.0..=1.0).contains(&a)));
        assert!(m.stage1_forward(&ps_input(&ps, (1, 7, 63), 1.0)).is_err());
    }

    fn ps_input(ps: &ParamStore, shape: (usize, usize, usize), scale: f64) -> Tensor {
        let mut local = ParamStore::new(99, ps.dtype());
        local
            .param("x", &[shape.0, shape.1, shape.2], Init::Uniform(scale))
            .unwrap()
    }

    #[test]
    fn unity_gains_expand_to_unity() {
        let (_, m) = build(&MfNetConfig::desk(), DType::F64);
        let ones = Tensor::ones((1, 3, 64), DType::F64, &Device::Cpu).unwrap();
        for v in flat(&m.expand_gains(&ones).unwrap()) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_init_passes_clean_speech() {
        let (_, m) = build(&MfNetConfig::desk(), DType::F32);
        let w = synth::voiced_speech(5, 0.5, 48_000);
        let out = m.enhance(&w).unwrap();
        assert_eq!(out.len(), w.len());
        let s = crate::eval::metrics::si_sdr(&out, &w).unwrap();
        assert!(s > 30.0, "{s}");
        let zero = Waveform::zeros(4800, 48_000).unwrap();
        assert!(m.enhance(&zero).unwrap().samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_refiners_return_the_coarse_spectrum() {
        let cfg = MfNetConfig::desk();
        let (_, m) = build(&cfg, DType::F64);
        let w = synth::white_noise(2, 4800, 0.2, 48_000);
        let b = m.prepare(&[&w]).unwrap();
        let out = m.forward_spectrum(&b.re, &b.im).unwrap();
        for (a, c) in flat(&out.re).iter().zip(flat(&out.coarse_re)) {
            assert!((a - c).abs() <= 1e-9 * (1.0 + c.abs()));
        }
    }

    fn future_change(cfg: &MfNetConfig) -> f32 {
        let (_, m) = build(cfg, DType::F64);
        let hop = cfg.stft.hop_len();
        let w = synth::white_noise(4, 40 * hop, 0.3, cfg.stft.sample_rate_hz);
        let base = m.enhance(&w).unwrap();
        let t = 20;
        let mut s = w.samples().to_vec();
        for v in &mut s[(t + 3) * hop..] {
            *v = 0.7 - *v;
        }
        let pert = m.enhance(&w.with_samples(s).unwrap()).unwrap();
        base.samples()[..(t + 1) * hop]
            .iter()
            .zip(&pert.samples()[..(t + 1) * hop])
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    #[test]
    fn causal_profile_ignores_the_future() {
        assert!(future_change(&MfNetConfig::tiny()) < 1e-6);
        assert!(future_change(&MfNetConfig { causal: false, ..MfNetConfig::tiny() }) > 1e-6);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let (ps, m) = build(&MfNetConfig::tiny(), DType::F64);
        let noisy = synth::white_noise(6, 84, 0.3, 1200);
        let clean = synth::sine(150.0, 0.5, 84, 1200);
        let batch = m.prepare(&[&noisy]).unwrap();
        assert_eq!(batch.re.dims(), &[1, 8, 13]);
        let reference = Tensor::from_vec(
            clean.samples().iter().map(|&v| v as f64).collect::<Vec<_>>(),
            (1, 84),
            &Device::Cpu,
        )
        .unwrap();
        let mr = MrStftLoss::new(&[StftResolution::quarter_hop(16), StftResolution::quarter_hop(32)], DType::F64).unwrap();
        let samples = check_gradients(&ps, "mfnet.", 10, 1e-6, 5, || {
            let est = m.forward_batch(&batch)?;
            Ok((mr.forward(&est, &reference)? + waveform_loss(&est, &reference)?.affine(10.0, 0.0)?)?)
        })
        .unwrap();
        for s in samples {
            assert!(s.rel_error() < 1e-3, "{s:?}");
        }
    }
}
