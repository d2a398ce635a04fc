//! Least-squares adversarial objectives, feature matching and the combined
//! generator objective.

use candle_core::Tensor;

use super::config::LossWeights;
use super::discriminator::{DiscOutput, DiscriminatorBank};
use crate::error::{Error, Result};
use crate::nn::{waveform_loss, MrStftLoss};

fn mean_over(terms: Vec<Tensor>) -> Result<Tensor> {
    let n = terms.len();
    if n == 0 {
        return Err(Error::validation("no discriminator outputs"));
    }
    let sum = Tensor::stack(&terms, 0)?.sum_all()?;
    Ok(sum.affine(1.0 / n as f64, 0.0)?)
}

/// `mean((real − 1)²) + mean(fake²)`, averaged over resolutions.
pub fn discriminator_loss(real: &[DiscOutput], fake: &[DiscOutput]) -> Result<Tensor> {
    if real.len() != fake.len() {
        return Err(Error::validation("real and fake outputs differ in resolution count"));
    }
    let terms = real
        .iter()
        .zip(fake)
        .map(|(r, f)| {
            let a = (&r.score - 1.0)?.sqr()?.mean_all()?;
            let b = f.score.sqr()?.mean_all()?;
            Ok((a + b)?)
        })
        .collect::<Result<Vec<_>>>()?;
    mean_over(terms)
}

/// `mean((fake − 1)²)`, averaged over resolutions.
pub fn generator_adv_loss(fake: &[DiscOutput]) -> Result<Tensor> {
    let terms = fake
        .iter()
        .map(|f| Ok((&f.score - 1.0)?.sqr()?.mean_all()?))
        .collect::<Result<Vec<_>>>()?;
    mean_over(terms)
}

/// Mean L1 over corresponding feature maps, averaged per resolution and then
/// across resolutions.
pub fn feature_match_loss(real: &[DiscOutput], fake: &[DiscOutput]) -> Result<Tensor> {
    if real.len() != fake.len() {
        return Err(Error::validation("feature sets differ in resolution count"));
    }
    let mut per_res = Vec::with_capacity(real.len());
    for (r, f) in real.iter().zip(fake) {
        if r.features.len() != f.features.len() || r.features.is_empty() {
            return Err(Error::validation("feature sets differ in layer count"));
        }
        let mut maps = Vec::with_capacity(r.features.len());
        for (a, b) in r.features.iter().zip(&f.features) {
            if a.dims() != b.dims() {
                return Err(Error::validation(format!(
                    "feature map shapes differ: {:?} vs {:?}",
                    a.dims(),
                    b.dims()
                )));
            }
            maps.push((a - b)?.abs()?.mean_all()?);
        }
        per_res.push(mean_over(maps)?);
    }
    mean_over(per_res)
}

/// Every generator loss term; `adv` and `fm` are zero when the adversarial
/// part is off.
#[derive(Clone, Debug)]
pub struct GeneratorLossTerms {
    pub mrstft: Tensor,
    pub wave: Tensor,
    pub adv: Tensor,
    pub fm: Tensor,
    pub total: Tensor,
}

impl GeneratorLossTerms {
    /// Unweighted term values as `(name, value)` pairs, plus the weighted total.
    pub fn values(&self) -> Result<Vec<(&'static str, f64)>> {
        let v = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?) };
        Ok(vec![
            ("mrstft", v(&self.mrstft)?),
            ("wave", v(&self.wave)?),
            ("g_adv", v(&self.adv)?),
            ("fm", v(&self.fm)?),
            ("g_total", v(&self.total)?),
        ])
    }
}

/// Weighted generator objective for `(B, L)` estimate and reference.
pub fn generator_objective(
    est: &Tensor,
    reference: &Tensor,
    mrstft: &MrStftLoss,
    weights: &LossWeights,
    bank: Option<&DiscriminatorBank>,
) -> Result<GeneratorLossTerms> {
    let l_mr = mrstft.forward(est, reference)?;
    let l_wave = waveform_loss(est, reference)?;
    let zero = l_wave.zeros_like()?;
    let (l_adv, l_fm) = match bank {
        Some(bank) => {
            let fake = bank.forward(est)?;
            let real = bank.forward(&reference.detach())?;
            (generator_adv_loss(&fake)?, feature_match_loss(&real, &fake)?)
        }
        None => (zero.clone(), zero),
    };
    let total = ((l_mr.affine(weights.mrstft, 0.0)? + l_wave.affine(weights.wave, 0.0)?)?
        + (l_adv.affine(weights.adv, 0.0)? + l_fm.affine(weights.fm, 0.0)?)?)?;
    Ok(GeneratorLossTerms {
        mrstft: l_mr,
        wave: l_wave,
        adv: l_adv,
        fm: l_fm,
        total,
    })
}
