//! Full two-stage inference: degraded speech through the restoration
//! generator, then MF-Net.

use std::path::Path;

use candle_core::DType;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::gan::{Generator, GeneratorConfig};
use crate::mfnet::{MfNet, MfNetConfig};
use crate::nn::ParamStore;
use crate::train::{load_gan, load_mfnet};

/// Which weights produced an output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelIdentity {
    pub gan_weights_hash: String,
    pub gan_config_hash: String,
    pub mfnet_weights_hash: String,
    pub mfnet_config_hash: String,
    /// GAN hash recorded in the MF-Net sidecar.
    pub mfnet_trained_on: Option<String>,
    pub chained: bool,
}

pub struct Pipeline {
    gan: Generator,
    mfnet: MfNet,
    gan_params: ParamStore,
    mfnet_params: ParamStore,
    identity: ModelIdentity,
}

impl Pipeline {
    /// Load both checkpoints. An MF-Net trained against a different
    /// generator is refused unless `allow_mismatch` is set.
    pub fn load(gan: &Path, mfnet: &Path, allow_mismatch: bool) -> Result<Self> {
        let g = load_gan(gan, DType::F32)?;
        let m = load_mfnet(mfnet, DType::F32)?;
        let chained = m.meta.gan_checkpoint_hash.as_deref() == Some(g.meta.weights_hash.as_str());
        if !chained && !allow_mismatch {
            return Err(Error::config(format!(
                "{} was trained on GAN weights {}, but {} holds {}; pass --allow-mismatch to run anyway",
                mfnet.display(),
                m.meta.gan_checkpoint_hash.as_deref().unwrap_or("?"),
                gan.display(),
                g.meta.weights_hash
            )));
        }
        check_rates(g.model.config(), m.model.config())?;
        let identity = ModelIdentity {
            gan_weights_hash: g.meta.weights_hash,
            gan_config_hash: g.meta.config_hash,
            mfnet_weights_hash: m.meta.weights_hash,
            mfnet_config_hash: m.meta.config_hash,
            mfnet_trained_on: m.meta.gan_checkpoint_hash,
            chained,
        };
        Ok(Self {
            gan: g.model,
            mfnet: m.model,
            gan_params: g.params,
            mfnet_params: m.params,
            identity,
        })
    }

    /// Freshly initialised models, e.g. for timing or parameter reports.
    pub fn from_configs(gan: &GeneratorConfig, mfnet: &MfNetConfig, seed: u64) -> Result<Self> {
        check_rates(gan, mfnet)?;
        let mut gp = ParamStore::frozen(seed, DType::F32);
        let g = Generator::new(&mut gp, gan)?;
        let mut mp = ParamStore::frozen(seed.wrapping_add(2), DType::F32);
        let m = MfNet::new(&mut mp, mfnet)?;
        let gh = gp.digest()?;
        let identity = ModelIdentity {
            gan_weights_hash: gh.clone(),
            gan_config_hash: gan.hash()?,
            mfnet_weights_hash: mp.digest()?,
            mfnet_config_hash: mfnet.hash()?,
            mfnet_trained_on: Some(gh),
            chained: true,
        };
        Ok(Self {
            gan: g,
            mfnet: m,
            gan_params: gp,
            mfnet_params: mp,
            identity,
        })
    }

    pub fn identity(&self) -> &ModelIdentity {
        &self.identity
    }

    pub fn sample_rate(&self) -> u32 {
        self.gan.config().stft.sample_rate_hz
    }

    pub fn param_count(&self) -> usize {
        self.gan_params.count() + self.mfnet_params.count()
    }

    pub fn generator(&self) -> &Generator {
        &self.gan
    }

    pub fn mfnet(&self) -> &MfNet {
        &self.mfnet
    }

    /// Generator output and final output, both at the input length.
    pub fn enhance_stages(&self, wave: &Waveform) -> Result<(Waveform, Waveform)> {
        if wave.sample_rate() != self.sample_rate() {
            return Err(Error::validation(format!(
                "input is {} Hz, models run at {} Hz",
                wave.sample_rate(),
                self.sample_rate()
            )));
        }
        let restored = self.gan.restore(wave)?;
        let out = self.mfnet.enhance(&restored)?;
        Ok((restored, out))
    }

    pub fn enhance(&self, wave: &Waveform) -> Result<Waveform> {
        Ok(self.enhance_stages(wave)?.1)
    }
}

fn check_rates(gan: &GeneratorConfig, mfnet: &MfNetConfig) -> Result<()> {
    if gan.stft != mfnet.stft {
        return Err(Error::config(format!(
            "generator and MF-Net use different STFT settings ({:?} vs {:?})",
            gan.stft, mfnet.stft
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::synth;
    use crate::eval::si_sdr;
    use crate::train::checkpoint::{save_gan, save_mfnet};

    fn desk() -> Pipeline {
        Pipeline::from_configs(&GeneratorConfig::desk(), &MfNetConfig::desk(), 0).unwrap()
    }

    #[test]
    fn identity_models_pass_clean_speech() {
        let p = desk();
        let x = synth::voiced_speech(1, 0.5, 48_000);
        let y = p.enhance(&x).unwrap();
        assert_eq!(y.len(), x.len());
        let s = si_sdr(&y, &x).unwrap();
        assert!(s > 25.0, "{s}");
        assert_eq!(p.enhance(&x).unwrap(), y);
    }

    #[test]
    fn wrong_rate_is_a_validation_error() {
        let x = synth::voiced_speech(1, 0.2, 16_000);
        assert!(matches!(desk().enhance(&x), Err(Error::Validation(_))));
    }

    #[test]
    fn unchained_checkpoints_need_explicit_consent() {
        let dir = tempfile::tempdir().unwrap();
        let (gc, mc) = (GeneratorConfig::tiny(), MfNetConfig::tiny());
        let mut gp = ParamStore::new(1, DType::F32);
        Generator::new(&mut gp, &gc).unwrap();
        let mut mp = ParamStore::new(2, DType::F32);
        MfNet::new(&mut mp, &mc).unwrap();
        let g = dir.path().join("g.safetensors");
        let m = dir.path().join("m.safetensors");
        let good = dir.path().join("good.safetensors");
        save_gan(&gp, &gc, 1, &g).unwrap();
        save_mfnet(&mp, &mc, 1, "not-this-gan", &m).unwrap();
        save_mfnet(&mp, &mc, 1, &gp.digest().unwrap(), &good).unwrap();
        assert!(matches!(Pipeline::load(&g, &m, false), Err(Error::Config(_))));
        let loose = Pipeline::load(&g, &m, true).unwrap();
        assert!(!loose.identity().chained);
        assert!(Pipeline::load(&g, &good, false).unwrap().identity().chained);
    }

    #[test]
    fn mixed_rates_are_a_config_error() {
        let r = Pipeline::from_configs(&GeneratorConfig::tiny(), &MfNetConfig::desk(), 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
