//! LSTM layers on `(N, T, D)` sequences.

use candle_core::Tensor;

use super::layers::sigmoid;
use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Lstm {
    din: usize,
    hidden: usize,
    /// `(din, 4H)`, gate order input, forget, cell, output.
    w_ih: Tensor,
    w_hh: Tensor,
    b: Tensor,
}

impl Lstm {
    pub fn param_count(din: usize, hidden: usize) -> usize {
        4 * hidden * (din + hidden) + 4 * hidden
    }

    pub fn new(ps: &mut ParamStore, name: &str, din: usize, hidden: usize) -> Result<Self> {
        let init = Init::FanIn(hidden);
        ps.scoped(name, |ps| {
            Ok(Self {
                din,
                hidden,
                w_ih: ps.param("w_ih", &[din, 4 * hidden], init)?,
                w_hh: ps.param("w_hh", &[hidden, 4 * hidden], init)?,
                b: ps.param("bias", &[4 * hidden], init)?,
            })
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Run forward in time (or backward with `reverse`), returning `(N, T, H)`.
    pub fn forward_dir(&self, x: &Tensor, reverse: bool) -> Result<Tensor> {
        let (n, t, d) = x.dims3()?;
        if d != self.din {
            return Err(Error::validation(format!(
                "LSTM expects {} features, got {d}",
                self.din
            )));
        }
        let h4 = 4 * self.hidden;
        let xw = x
            .reshape((n * t, d))?
            .matmul(&self.w_ih)?
            .broadcast_add(&self.b)?
            .reshape((n, t, h4))?;
        let mut h = Tensor::zeros((n, self.hidden), x.dtype(), x.device())?;
        let mut c = h.clone();
        let mut outs = Vec::with_capacity(t);
        let order: Vec<usize> = if reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        };
        let hs = self.hidden;
        for step in order {
            let g = (xw.narrow(1, step, 1)?.squeeze(1)? + h.matmul(&self.w_hh)?)?;
            let i = sigmoid(&g.narrow(1, 0, hs)?)?;
            let f = sigmoid(&g.narrow(1, hs, hs)?)?;
            let u = g.narrow(1, 2 * hs, hs)?.tanh()?;
            let o = sigmoid(&g.narrow(1, 3 * hs, hs)?)?;
            c = ((f * c)? + (i * u)?)?;
            h = (o * c.tanh()?)?;
            outs.push(h.clone());
        }
        if reverse {
            outs.reverse();
        }
        Ok(Tensor::stack(&outs, 1)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_dir(x, false)
    }
}

/// Two independent LSTMs, one per direction, outputs concatenated to `2H`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    fwd: Lstm,
    bwd: Lstm,
}

impl BiLstm {
    pub fn param_count(din: usize, hidden: usize) -> usize {
        2 * Lstm::param_count(din, hidden)
    }

    pub fn new(ps: &mut ParamStore, name: &str, din: usize, hidden: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                fwd: Lstm::new(ps, "fwd", din, hidden)?,
                bwd: Lstm::new(ps, "bwd", din, hidden)?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let a = self.fwd.forward_dir(x, false)?;
        let b = self.bwd.forward_dir(x, true)?;
        super::layers::cat(&[a, b], 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::DType;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn matches_scalar_recurrence() {
        let mut ps = ParamStore::new(3, DType::F64);
        let lstm = Lstm::new(&mut ps, "l", 2, 3).unwrap();
        assert_eq!(ps.count(), Lstm::param_count(2, 3));
        let x = ps.param("x", &[1, 4, 2], Init::Uniform(1.0)).unwrap();
        let y = lstm.forward(&x).unwrap().to_vec3::<f64>().unwrap();
        let xv = x.to_vec3::<f64>().unwrap();
        let wi = ps.get("l.w_ih").unwrap().as_tensor().to_vec2::<f64>().unwrap();
        let wh = ps.get("l.w_hh").unwrap().as_tensor().to_vec2::<f64>().unwrap();
        let b = ps.get("l.bias").unwrap().as_tensor().to_vec1::<f64>().unwrap();
        let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
        for t in 0..4 {
            let g: Vec<f64> = (0..12)
                .map(|k| {
                    b[k] + (0..2).map(|d| xv[0][t][d] * wi[d][k]).sum::<f64>()
                        + (0..3).map(|j| h[j] * wh[j][k]).sum::<f64>()
                })
                .collect();
            for j in 0..3 {
                c[j] = sig(g[3 + j]) * c[j] + sig(g[j]) * g[6 + j].tanh();
                h[j] = sig(g[9 + j]) * c[j].tanh();
                assert!((h[j] - y[0][t][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unidirectional_is_causal_and_bidirectional_is_not() {
        let mut ps = ParamStore::new(4, DType::F64);
        let uni = Lstm::new(&mut ps, "u", 2, 3).unwrap();
        let bi = BiLstm::new(&mut ps, "b", 2, 3).unwrap();
        let x = ps.param("x", &[2, 6, 2], Init::Uniform(1.0)).unwrap();
        let x2 = Tensor::cat(&[x.narrow(1, 0, 4).unwrap(), x.narrow(1, 4, 2).unwrap().affine(2.0, 1.0).unwrap()], 1).unwrap();
        let head = |t: Tensor| t.narrow(1, 0, 4).unwrap().to_vec3::<f64>().unwrap();
        assert_eq!(head(uni.forward(&x).unwrap()), head(uni.forward(&x2).unwrap()));
        assert_ne!(head(bi.forward(&x).unwrap()), head(bi.forward(&x2).unwrap()));
        assert_eq!(bi.forward(&x).unwrap().dims(), &[2, 6, 6]);
    }
}
