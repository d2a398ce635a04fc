//! Layers on channels-last tensors. 2-D feature maps are `(B, T, F, C)`,
//! sequences are `(B, T, D)`.

use candle_core::{Tensor, D};

use super::params::{Init, ParamStore};
use super::unfold::Patches;
use crate::error::{Error, Result};

fn expect_rank(x: &Tensor, rank: usize, what: &str) -> Result<()> {
    if x.rank() != rank {
        return Err(Error::validation(format!(
            "{what} expects a rank-{rank} tensor, got shape {:?}",
            x.dims()
        )));
    }
    Ok(())
}

fn expect_last(x: &Tensor, n: usize, what: &str) -> Result<()> {
    let last = *x.dims().last().unwrap_or(&0);
    if last != n {
        return Err(Error::validation(format!(
            "{what} expects {n} input features, got shape {:?}",
            x.dims()
        )));
    }
    Ok(())
}

/// `x @ w` over the last axis for any leading shape.
/// `Tensor::cat` that copies strided views first, so the result is always
/// contiguous.
pub fn cat<T: AsRef<Tensor>>(parts: &[T], dim: usize) -> Result<Tensor> {
    let parts = parts
        .iter()
        .map(|p| p.as_ref().contiguous())
        .collect::<candle_core::Result<Vec<_>>>()?;
    Ok(Tensor::cat(&parts, dim)?)
}

fn matmul_last(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let dims = x.dims().to_vec();
    let k = *dims.last().expect("non-scalar");
    let n = w.dim(1)?;
    let rows: usize = dims[..dims.len() - 1].iter().product();
    let y = x.reshape((rows, k))?.matmul(w)?;
    let mut out = dims;
    *out.last_mut().expect("non-scalar") = n;
    Ok(y.reshape(out)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimePad {
    /// All padding before the first frame: frame t sees frames `<= t` only.
    Causal,
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub cin: usize,
    pub cout: usize,
    pub kt: usize,
    pub kf: usize,
    pub dt: usize,
    pub df: usize,
    /// 1 or 2 along frequency.
    pub freq_stride: usize,
    pub time_pad: TimePad,
}

impl Conv2dSpec {
    pub fn new(cin: usize, cout: usize, kt: usize, kf: usize) -> Self {
        Self {
            cin,
            cout,
            kt,
            kf,
            dt: 1,
            df: 1,
            freq_stride: 1,
            time_pad: TimePad::Causal,
        }
    }

    pub fn dilation(mut self, dt: usize, df: usize) -> Self {
        self.dt = dt;
        self.df = df;
        self
    }

    pub fn stride_f(mut self, s: usize) -> Self {
        self.freq_stride = s;
        self
    }

    pub fn time_pad(mut self, p: TimePad) -> Self {
        self.time_pad = p;
        self
    }

    pub fn param_count(&self) -> usize {
        self.kt * self.kf * self.cin * self.cout + self.cout
    }

    pub fn out_freq(&self, f: usize) -> usize {
        f.div_ceil(self.freq_stride)
    }
}

/// 2-D convolution built from shifted views and one matmul. Weight rows are
/// ordered (time tap, frequency tap, input channel).
#[derive(Clone, Debug)]
pub struct Conv2d {
    spec: Conv2dSpec,
    w: Tensor,
    b: Tensor,
}

impl Conv2d {
    pub fn new(ps: &mut ParamStore, name: &str, spec: Conv2dSpec, zero: bool) -> Result<Self> {
        if spec.kt == 0 || spec.kf == 0 || spec.dt == 0 || spec.df == 0 {
            return Err(Error::config(format!("degenerate convolution {spec:?}")));
        }
        if !matches!(spec.freq_stride, 1 | 2) {
            return Err(Error::config("frequency stride must be 1 or 2"));
        }
        let fan_in = spec.kt * spec.kf * spec.cin;
        let (wi, bi) = if zero {
            (Init::Zeros, Init::Zeros)
        } else {
            (Init::FanIn(fan_in), Init::FanIn(fan_in))
        };
        ps.scoped(name, |ps| {
            Ok(Self {
                spec,
                w: ps.param("weight", &[fan_in, spec.cout], wi)?,
                b: ps.param("bias", &[spec.cout], bi)?,
            })
        })
    }

    pub fn spec(&self) -> &Conv2dSpec {
        &self.spec
    }

    pub fn weight(&self) -> &Tensor {
        &self.w
    }

    pub fn bias(&self) -> &Tensor {
        &self.b
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        expect_rank(x, 4, "conv2d")?;
        expect_last(x, self.spec.cin, "conv2d")?;
        let s = &self.spec;
        let tpad = (s.kt - 1) * s.dt;
        let pad_t = match s.time_pad {
            TimePad::Causal => (tpad, 0),
            TimePad::Same => (tpad / 2, tpad - tpad / 2),
        };
        let fpad = (s.kf - 1) * s.df;
        let cols = Patches {
            kt: s.kt,
            kf: s.kf,
            dt: s.dt,
            df: s.df,
            pad_t,
            pad_f: (fpad / 2, fpad - fpad / 2),
            stride_f: s.freq_stride,
        }
        .unfold(x)?;
        Ok(matmul_last(&cols, &self.w)?.broadcast_add(&self.b)?)
    }
}

/// Transposed convolution that doubles the frequency axis (kernel 3 along
/// frequency, stride 2) and is causal along time.
#[derive(Clone, Debug)]
pub struct ConvTransposeF2 {
    cin: usize,
    cout: usize,
    kt: usize,
    /// `(kt·cin, 3·cout)`, columns ordered (frequency tap, output channel).
    w: Tensor,
    b: Tensor,
}

impl ConvTransposeF2 {
    pub fn param_count(cin: usize, cout: usize, kt: usize) -> usize {
        kt * 3 * cin * cout + cout
    }

    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kt: usize,
        zero: bool,
    ) -> Result<Self> {
        let fan_in = kt * cin * 3 / 2;
        let (wi, bi) = if zero {
            (Init::Zeros, Init::Zeros)
        } else {
            (Init::FanIn(fan_in), Init::FanIn(fan_in))
        };
        ps.scoped(name, |ps| {
            Ok(Self {
                cin,
                cout,
                kt,
                w: ps.param("weight", &[kt * cin, 3 * cout], wi)?,
                b: ps.param("bias", &[cout], bi)?,
            })
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.w
    }

    pub fn bias(&self) -> &Tensor {
        &self.b
    }

    /// `(B, T, F, cin)` to `(B, T, 2F, cout)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        expect_rank(x, 4, "transposed conv")?;
        expect_last(x, self.cin, "transposed conv")?;
        let (b, t, f, _) = x.dims4()?;
        let xp = x.pad_with_zeros(1, self.kt - 1, 0)?;
        let taps: Vec<Tensor> = (0..self.kt)
            .map(|i| xp.narrow(1, i, t))
            .collect::<candle_core::Result<_>>()?;
        let cols = cat(&taps, 3)?;
        let z = matmul_last(&cols, &self.w)?.reshape((b, t, f, 3, self.cout))?;
        let z0 = z.narrow(3, 0, 1)?.squeeze(3)?;
        let even = z.narrow(3, 1, 1)?.squeeze(3)?;
        let z2 = z.narrow(3, 2, 1)?.squeeze(3)?;
        let z0_next = if f > 1 {
            z0.narrow(2, 1, f - 1)?.pad_with_zeros(2, 0, 1)?
        } else {
            z0.zeros_like()?
        };
        let odd = (z2 + z0_next)?;
        let y = Tensor::stack(&[even, odd], 3)?.reshape((b, t, 2 * f, self.cout))?;
        Ok(y.broadcast_add(&self.b)?)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: Tensor,
    b: Tensor,
    din: usize,
}

impl Linear {
    pub fn param_count(din: usize, dout: usize) -> usize {
        din * dout + dout
    }

    pub fn new(ps: &mut ParamStore, name: &str, din: usize, dout: usize, zero: bool) -> Result<Self> {
        let (wi, bi) = if zero {
            (Init::Zeros, Init::Zeros)
        } else {
            (Init::FanIn(din), Init::FanIn(din))
        };
        Self::with_init(ps, name, din, dout, wi, bi)
    }

    pub fn with_init(
        ps: &mut ParamStore,
        name: &str,
        din: usize,
        dout: usize,
        wi: Init,
        bi: Init,
    ) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                w: ps.param("weight", &[din, dout], wi)?,
                b: ps.param("bias", &[dout], bi)?,
                din,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        expect_last(x, self.din, "linear")?;
        Ok(matmul_last(x, &self.w)?.broadcast_add(&self.b)?)
    }
}

/// Per-channel parametric ReLU on the last axis.
#[derive(Clone, Debug)]
pub struct PRelu {
    alpha: Tensor,
}

impl PRelu {
    pub fn param_count(c: usize) -> usize {
        c
    }

    pub fn new(ps: &mut ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            alpha: ps.scoped(name, |ps| ps.param("alpha", &[c], Init::Const(0.25)))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let neg = x.neg()?.relu()?.broadcast_mul(&self.alpha)?;
        Ok((x.relu()? - neg)?)
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    let neg = x.neg()?.relu()?.affine(slope, 0.0)?;
    Ok((x.relu()? - neg)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(x.affine(0.5, 0.0)?.tanh()?.affine(0.5, 0.5)?)
}

/// Normalization over the last axis with a learned gain and offset.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    g: Tensor,
    b: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn param_count(d: usize) -> usize {
        2 * d
    }

    pub fn new(ps: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                g: ps.param("gain", &[d], Init::Const(1.0))?,
                b: ps.param("bias", &[d], Init::Zeros)?,
                eps: 1e-5,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mu = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mu)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let y = xc.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(y.broadcast_mul(&self.g)?.broadcast_add(&self.b)?)
    }
}

/// Dilated depthwise convolution over time on `(B, T, D)`, causal or centred.
#[derive(Clone, Debug)]
pub struct DepthwiseConv1d {
    k: usize,
    dilation: usize,
    causal: bool,
    w: Tensor,
    b: Tensor,
}

impl DepthwiseConv1d {
    pub fn param_count(d: usize, k: usize) -> usize {
        k * d + d
    }

    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        d: usize,
        k: usize,
        dilation: usize,
        causal: bool,
    ) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                k,
                dilation,
                causal,
                w: ps.param("weight", &[k, d], Init::FanIn(k))?,
                b: ps.param("bias", &[d], Init::FanIn(k))?,
            })
        })
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        expect_rank(x, 3, "depthwise conv")?;
        let t = x.dim(1)?;
        let pad = (self.k - 1) * self.dilation;
        let left = if self.causal { pad } else { pad / 2 };
        let xp = x.pad_with_zeros(1, left, pad - left)?;
        let mut acc = self.b.unsqueeze(0)?.unsqueeze(0)?.broadcast_as(x.shape())?.contiguous()?;
        for i in 0..self.k {
            let wi = self.w.narrow(0, i, 1)?.squeeze(0)?;
            acc = (acc + xp.narrow(1, i * self.dilation, t)?.broadcast_mul(&wi)?)?;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut ps = ParamStore::new(seed, DType::F64);
        ps.param("x", shape, Init::Uniform(1.0)).unwrap()
    }

    fn to4(t: &Tensor) -> Vec<Vec<Vec<Vec<f64>>>> {
        let b = t.dim(0).unwrap();
        (0..b).map(|i| t.get(i).unwrap().to_vec3::<f64>().unwrap()).collect()
    }

    fn oracle_conv(x: &Tensor, conv: &Conv2d) -> Vec<Vec<Vec<Vec<f64>>>> {
        let s = *conv.spec();
        let xv = to4(x);
        let w = conv.weight().to_vec2::<f64>().unwrap();
        let bias = conv.bias().to_vec1::<f64>().unwrap();
        let (bn, t, f, _) = x.dims4().unwrap();
        let tpad = (s.kt - 1) * s.dt;
        let tl = match s.time_pad {
            TimePad::Causal => tpad,
            TimePad::Same => tpad / 2,
        } as isize;
        let fl = ((s.kf - 1) * s.df / 2) as isize;
        let fo = s.out_freq(f);
        let mut out = vec![vec![vec![vec![0.0; s.cout]; fo]; t]; bn];
        for b in 0..bn {
            for ti in 0..t {
                for fi in 0..fo {
                    for o in 0..s.cout {
                        let mut acc = bias[o];
                        for i in 0..s.kt {
                            for j in 0..s.kf {
                                let st = ti as isize + (i * s.dt) as isize - tl;
                                let sf = (fi * s.freq_stride) as isize + (j * s.df) as isize - fl;
                                if st < 0 || st >= t as isize || sf < 0 || sf >= f as isize {
                                    continue;
                                }
                                for c in 0..s.cin {
                                    acc += xv[b][st as usize][sf as usize][c]
                                        * w[(i * s.kf + j) * s.cin + c][o];
                                }
                            }
                        }
                        out[b][ti][fi][o] = acc;
                    }
                }
            }
        }
        out
    }

    fn assert_close4(a: &[Vec<Vec<Vec<f64>>>], b: &[Vec<Vec<Vec<f64>>>]) {
        let fa: Vec<f64> = a.iter().flatten().flatten().flatten().copied().collect();
        let fb: Vec<f64> = b.iter().flatten().flatten().flatten().copied().collect();
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn conv_matches_direct_oracle() {
        let specs = [
            Conv2dSpec::new(3, 4, 2, 3),
            Conv2dSpec::new(3, 4, 2, 3).stride_f(2),
            Conv2dSpec::new(2, 3, 2, 3).dilation(4, 1),
            Conv2dSpec::new(2, 3, 3, 5).time_pad(TimePad::Same).stride_f(2),
            Conv2dSpec::new(2, 2, 1, 1),
        ];
        for (n, spec) in specs.into_iter().enumerate() {
            let mut ps = ParamStore::new(n as u64, DType::F64);
            let conv = Conv2d::new(&mut ps, "c", spec, false).unwrap();
            for f in [8, 9] {
                let x = rand_tensor(&[2, 6, f, spec.cin], 100 + n as u64);
                let y = conv.forward(&x).unwrap();
                assert_eq!(y.dims(), &[2, 6, spec.out_freq(f), spec.cout]);
                assert_close4(&to4(&y), &oracle_conv(&x, &conv));
            }
        }
    }

    #[test]
    fn single_in_single_out_3x3_count() {
        let spec = Conv2dSpec::new(1, 8, 3, 3);
        assert_eq!(spec.param_count(), 80);
        let mut ps = ParamStore::new(0, DType::F32);
        Conv2d::new(&mut ps, "c", spec, false).unwrap();
        assert_eq!(ps.count(), 80);
    }

    #[test]
    fn transposed_conv_matches_scatter_oracle() {
        let (cin, cout, kt) = (3, 2, 2);
        let mut ps = ParamStore::new(5, DType::F64);
        let tc = ConvTransposeF2::new(&mut ps, "t", cin, cout, kt, false).unwrap();
        assert_eq!(ps.count(), ConvTransposeF2::param_count(cin, cout, kt));
        let x = rand_tensor(&[1, 5, 4, cin], 9);
        let y = to4(&tc.forward(&x).unwrap());
        let xv = to4(&x);
        let w = tc.weight().to_vec2::<f64>().unwrap();
        let bias = tc.bias().to_vec1::<f64>().unwrap();
        let mut expect = vec![vec![vec![bias.clone(); 8]; 5]; 1];
        for t in 0..5 {
            for f in 0..4 {
                for j in 0..3 {
                    let o = (2 * f + j) as isize - 1;
                    if !(0..8).contains(&o) {
                        continue;
                    }
                    for i in 0..kt {
                        let st = t as isize + i as isize - (kt as isize - 1);
                        if st < 0 {
                            continue;
                        }
                        for c in 0..cin {
                            for d in 0..cout {
                                expect[0][t][o as usize][d] +=
                                    xv[0][st as usize][f][c] * w[i * cin + c][j * cout + d];
                            }
                        }
                    }
                }
            }
        }
        assert_close4(&y, &expect);
    }

    #[test]
    fn causal_ops_ignore_future_frames() {
        let mut ps = ParamStore::new(1, DType::F64);
        let conv = Conv2d::new(&mut ps, "c", Conv2dSpec::new(2, 2, 2, 3).dilation(2, 1), false).unwrap();
        let dw = DepthwiseConv1d::new(&mut ps, "d", 4, 3, 4, true).unwrap();
        let x = rand_tensor(&[1, 10, 6, 2], 3);
        let mut x2 = x.narrow(1, 0, 6).unwrap();
        x2 = Tensor::cat(&[&x2, &x.narrow(1, 6, 4).unwrap().affine(-3.0, 1.0).unwrap()], 1).unwrap();
        let a = conv.forward(&x).unwrap().narrow(1, 0, 6).unwrap();
        let b = conv.forward(&x2).unwrap().narrow(1, 0, 6).unwrap();
        assert_close4(&to4(&a), &to4(&b));
        let s = rand_tensor(&[1, 10, 4], 4);
        let s2 = Tensor::cat(
            &[&s.narrow(1, 0, 6).unwrap(), &s.narrow(1, 6, 4).unwrap().affine(5.0, 0.0).unwrap()],
            1,
        )
        .unwrap();
        let a = dw.forward(&s).unwrap().narrow(1, 0, 6).unwrap().to_vec3::<f64>().unwrap();
        let b = dw.forward(&s2).unwrap().narrow(1, 0, 6).unwrap().to_vec3::<f64>().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depthwise_matches_direct_sum() {
        let mut ps = ParamStore::new(2, DType::F64);
        let dw = DepthwiseConv1d::new(&mut ps, "d", 3, 3, 2, true).unwrap();
        let x = rand_tensor(&[1, 7, 3], 8);
        let y = dw.forward(&x).unwrap().to_vec3::<f64>().unwrap();
        let xv = x.to_vec3::<f64>().unwrap();
        let w = ps.get("d.weight").unwrap().as_tensor().to_vec2::<f64>().unwrap();
        let b = ps.get("d.bias").unwrap().as_tensor().to_vec1::<f64>().unwrap();
        for t in 0..7 {
            for d in 0..3 {
                let mut acc = b[d];
                for i in 0..3 {
                    let st = t as isize - ((2 - i) * 2) as isize;
                    if st >= 0 {
                        acc += xv[0][st as usize][d] * w[i][d];
                    }
                }
                assert!((acc - y[0][t][d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pointwise_layers() {
        let x = Tensor::new(&[[-2.0f64, 0.0, 3.0]], &Device::Cpu).unwrap();
        let mut ps = ParamStore::new(0, DType::F64);
        let p = PRelu::new(&mut ps, "p", 3).unwrap();
        assert_eq!(p.forward(&x).unwrap().to_vec2::<f64>().unwrap(), vec![vec![-0.5, 0.0, 3.0]]);
        assert_eq!(
            leaky_relu(&x, 0.2).unwrap().to_vec2::<f64>().unwrap(),
            vec![vec![-0.4, 0.0, 3.0]]
        );
        let s = sigmoid(&x).unwrap().to_vec2::<f64>().unwrap();
        for (v, xi) in s[0].iter().zip([-2.0f64, 0.0, 3.0]) {
            assert!((v - 1.0 / (1.0 + (-xi).exp())).abs() < 1e-12);
        }
        let ln = LayerNorm::new(&mut ps, "ln", 3).unwrap();
        let y = ln.forward(&x).unwrap().to_vec2::<f64>().unwrap();
        let m: f64 = y[0].iter().sum::<f64>() / 3.0;
        let v: f64 = y[0].iter().map(|a| (a - m).powi(2)).sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-4);
        let lin = Linear::new(&mut ps, "l", 3, 2, true).unwrap();
        assert_eq!(lin.forward(&x).unwrap().dims(), &[1, 2]);
        assert!(lin.forward(&x.unsqueeze(0).unwrap().unsqueeze(0).unwrap()).is_ok());
        assert!(matches!(
            lin.forward(&Tensor::zeros((1, 4), DType::F64, &Device::Cpu).unwrap()),
            Err(Error::Validation(_))
        ));
    }
}
