//! Central finite-difference checks of autograd gradients.

use candle_core::{DType, Tensor, Var};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradSample {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// `|a − n| / max(|a|, |n|, 1e-8)`.
    pub fn rel_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(1e-8);
        (self.analytic - self.numeric).abs() / scale
    }
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn set_element(var: &Var, values: &[f64], index: usize, value: f64) -> Result<()> {
    let mut v = values.to_vec();
    v[index] = value;
    let t = Tensor::from_vec(v, var.shape(), var.device())?.to_dtype(var.dtype())?;
    var.set(&t)?;
    Ok(())
}

/// Compare analytic and central-difference gradients of `loss` on `n`
/// scalars drawn from parameters whose name starts with `prefix`.
///
/// Only elements with a non-negligible analytic gradient are sampled, so
/// every comparison exercises a live path. The store should be `F64`.
pub fn check_gradients(
    ps: &ParamStore,
    prefix: &str,
    n: usize,
    step: f64,
    seed: u64,
    loss: impl Fn() -> Result<Tensor>,
) -> Result<Vec<GradSample>> {
    let grads = loss()?.backward()?;
    let mut candidates = Vec::new();
    for (name, var) in ps.named().filter(|(k, _)| k.starts_with(prefix)) {
        let Some(g) = grads.get(var.as_tensor()) else { continue };
        let g: Vec<f64> = g.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        for (i, v) in g.into_iter().enumerate() {
            if v.abs() > 1e-6 {
                candidates.push((name.clone(), var.clone(), i, v));
            }
        }
    }
    if candidates.len() < n {
        return Err(Error::validation(format!(
            "only {} parameters under '{prefix}' carry a gradient, {n} requested",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<_> = candidates.choose_multiple(&mut rng, n).cloned().collect();
    let mut out = Vec::with_capacity(n);
    for (name, var, index, analytic) in picked {
        let values: Vec<f64> = var.as_tensor().to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let x0 = values[index];
        set_element(&var, &values, index, x0 + step)?;
        let up = scalar(&loss()?)?;
        set_element(&var, &values, index, x0 - step)?;
        let down = scalar(&loss()?)?;
        set_element(&var, &values, index, x0)?;
        out.push(GradSample {
            name,
            index,
            analytic,
            numeric: (up - down) / (2.0 * step),
        });
    }
    Ok(out)
}
