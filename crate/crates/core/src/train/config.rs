use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degrade::{Span, TRANSIENT_SNR_RANGE_DB};
use crate::dsp::mrstft::{StftResolution, DEFAULT_RESOLUTIONS};
use crate::error::{Error, Result};
use crate::gan::{DiscriminatorBankConfig, GeneratorConfig, LossWeights};
use crate::mfnet::MfNetConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Gan,
    Mfnet,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Gan => "gan",
            Stage::Mfnet => "mfnet",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gan" => Ok(Stage::Gan),
            "mfnet" => Ok(Stage::Mfnet),
            other => Err(Error::config(format!("unknown stage {other:?}, expected gan or mfnet"))),
        }
    }
}

/// AdamW settings shared by every network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub grad_clip: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.8,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: 5.0,
        }
    }
}

impl OptimConfig {
    fn validate(&self) -> Result<()> {
        let betas = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if !(self.lr > 0.0 && self.eps > 0.0 && self.weight_decay >= 0.0 && self.grad_clip >= 0.0 && betas) {
            return Err(Error::config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanStageConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorBankConfig,
    pub weights: LossWeights,
    pub mrstft_resolutions: Vec<StftResolution>,
    /// Reconstruction-only steps before adversarial terms switch on.
    pub adv_warmup_steps: usize,
    /// Discriminator updates per generator update once adversarial training
    /// is on.
    pub d_steps_per_g: usize,
}

impl Default for GanStageConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::rt(),
            discriminator: DiscriminatorBankConfig::default(),
            weights: LossWeights::default(),
            mrstft_resolutions: DEFAULT_RESOLUTIONS.to_vec(),
            adv_warmup_steps: 1000,
            d_steps_per_g: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfnetStageConfig {
    pub model: MfNetConfig,
    pub mrstft_weight: f64,
    pub wave_weight: f64,
    pub mrstft_resolutions: Vec<StftResolution>,
    /// Chance that a training example receives a transient.
    pub transient_probability: f64,
    pub transient_snr_db: Span,
    /// Transient recordings; mixed with `synthetic_transients` generated bursts.
    pub transient_files: Vec<PathBuf>,
    pub synthetic_transients: usize,
}

impl Default for MfnetStageConfig {
    fn default() -> Self {
        let (lo, hi) = TRANSIENT_SNR_RANGE_DB;
        Self {
            model: MfNetConfig::rt(),
            mrstft_weight: 1.0,
            wave_weight: 10.0,
            mrstft_resolutions: DEFAULT_RESOLUTIONS.to_vec(),
            transient_probability: 1.0,
            transient_snr_db: Span::new(lo, hi),
            transient_files: Vec::new(),
            synthetic_transients: 8,
        }
    }
}

/// Everything one training run needs. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage: Stage,
    /// Manifest written by the corpus builder.
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    pub batch_size: usize,
    pub segment_s: f64,
    pub max_steps: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Run every tensor op on a single thread so repeated runs match bitwise.
    pub deterministic: bool,
    pub optim: OptimConfig,
    pub gan: GanStageConfig,
    pub mfnet: MfnetStageConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Gan,
            corpus: PathBuf::from("corpus/manifest.jsonl"),
            out_dir: PathBuf::from("runs"),
            batch_size: 4,
            segment_s: 2.0,
            max_steps: 100_000,
            checkpoint_every: 5_000,
            seed: 0,
            deterministic: true,
            optim: OptimConfig::default(),
            gan: GanStageConfig::default(),
            mfnet: MfnetStageConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Narrow models, short segments and small STFT resolutions: a setting
    /// that trains in minutes on one CPU core.
    pub fn desk(stage: Stage) -> Self {
        let res = vec![
            StftResolution::quarter_hop(128),
            StftResolution::quarter_hop(256),
            StftResolution::quarter_hop(512),
        ];
        Self {
            stage,
            batch_size: 4,
            segment_s: 0.25,
            max_steps: 500,
            checkpoint_every: 250,
            optim: OptimConfig {
                lr: 3e-3,
                ..OptimConfig::default()
            },
            gan: GanStageConfig {
                generator: GeneratorConfig::desk(),
                discriminator: DiscriminatorBankConfig {
                    resolutions: res.iter().map(|r| StftResolution::half_hop(r.fft)).collect(),
                    channels: 8,
                    ..Default::default()
                },
                mrstft_resolutions: res.clone(),
                adv_warmup_steps: 300,
                ..Default::default()
            },
            mfnet: MfnetStageConfig {
                model: MfNetConfig::desk(),
                mrstft_resolutions: res,
                ..Default::default()
            },
            ..Self::default()
        }
    }

    /// 1.2 kHz models, 0.1 s segments and 16/32-point resolutions:
    /// milliseconds per step, for tests and smoke runs.
    pub fn tiny(stage: Stage) -> Self {
        let res = vec![StftResolution::quarter_hop(16), StftResolution::quarter_hop(32)];
        let mut c = Self::desk(stage);
        c.segment_s = 0.1;
        c.batch_size = 2;
        c.gan.generator = GeneratorConfig::tiny();
        c.gan.discriminator = DiscriminatorBankConfig {
            resolutions: res.clone(),
            channels: 2,
            strided_layers: 1,
            ..Default::default()
        };
        c.gan.mrstft_resolutions = res.clone();
        c.gan.adv_warmup_steps = 3;
        c.mfnet.model = MfNetConfig::tiny();
        c.mfnet.mrstft_resolutions = res;
        c
    }

    /// JSON, or TOML when the extension is `.toml`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.corpus);
        resolve(&mut cfg.out_dir);
        cfg.mfnet.transient_files.iter_mut().for_each(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sample_rate(&self) -> u32 {
        match self.stage {
            Stage::Gan => self.gan.generator.stft.sample_rate_hz,
            Stage::Mfnet => self.mfnet.model.stft.sample_rate_hz,
        }
    }

    fn hop(&self) -> usize {
        match self.stage {
            Stage::Gan => self.gan.generator.stft.hop_len(),
            Stage::Mfnet => self.mfnet.model.stft.hop_len(),
        }
    }

    /// Segment length in samples.
    pub fn segment_len(&self) -> usize {
        (self.segment_s * self.sample_rate() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_steps == 0 || self.checkpoint_every == 0 {
            return Err(Error::config("batch_size, max_steps and checkpoint_every must be positive"));
        }
        self.optim.validate()?;
        let resolutions = match self.stage {
            Stage::Gan => {
                let g = &self.gan;
                g.generator.validate()?;
                g.discriminator.validate()?;
                g.weights.validate()?;
                if g.d_steps_per_g == 0 {
                    return Err(Error::config("d_steps_per_g must be at least 1"));
                }
                let mut r = g.mrstft_resolutions.clone();
                r.extend(&g.discriminator.resolutions);
                r
            }
            Stage::Mfnet => {
                let m = &self.mfnet;
                m.model.validate()?;
                if !(m.mrstft_weight > 0.0 && m.wave_weight > 0.0) {
                    return Err(Error::config("reconstruction weights must be positive"));
                }
                if !(0.0..=1.0).contains(&m.transient_probability) {
                    return Err(Error::config("transient_probability must lie in [0, 1]"));
                }
                let (lo, hi) = TRANSIENT_SNR_RANGE_DB;
                if m.transient_snr_db.min < lo || m.transient_snr_db.max > hi || m.transient_snr_db.min > m.transient_snr_db.max {
                    return Err(Error::config(format!("transient_snr_db must lie within [{lo}, {hi}] dB")));
                }
                if m.transient_probability > 0.0 && m.transient_files.is_empty() && m.synthetic_transients == 0 {
                    return Err(Error::config("transient injection is on but the transient bank is empty"));
                }
                m.mrstft_resolutions.clone()
            }
        };
        if resolutions.is_empty() {
            return Err(Error::config("at least one MR-STFT resolution is required"));
        }
        for r in &resolutions {
            r.validate()?;
        }
        let seg = self.segment_s * self.sample_rate() as f64;
        let hop = self.hop();
        if seg.round() != seg || !(seg as usize).is_multiple_of(hop) || seg <= 0.0 {
            return Err(Error::config(format!(
                "segment of {} s is not a positive multiple of the {hop}-sample hop",
                self.segment_s
            )));
        }
        let longest = resolutions.iter().map(|r| r.fft).max().unwrap_or(0);
        if (seg as usize) < longest {
            return Err(Error::config(format!(
                "segment of {} samples is shorter than the {longest}-point analysis window",
                seg as usize
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::desk(Stage::Gan).validate().unwrap();
        TrainConfig::desk(Stage::Mfnet).validate().unwrap();
    }

    #[test]
    fn json_and_toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            corpus: dir.path().join("m.jsonl"),
            out_dir: dir.path().join("out"),
            ..TrainConfig::desk(Stage::Mfnet)
        };
        let j = dir.path().join("c.json");
        std::fs::write(&j, cfg.to_json().unwrap()).unwrap();
        assert_eq!(TrainConfig::from_path(&j).unwrap(), cfg);
        let t = dir.path().join("c.toml");
        std::fs::write(&t, toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(TrainConfig::from_path(&t).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults_and_resolve_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"stage": "gan", "corpus": "data/m.jsonl", "max_steps": 3}"#).unwrap();
        let cfg = TrainConfig::from_path(&p).unwrap();
        assert_eq!(cfg.max_steps, 3);
        assert_eq!(cfg.corpus, dir.path().join("data/m.jsonl"));
        std::fs::write(&p, r#"{"stage": "gan", "learning_rate": 3}"#).unwrap();
        assert!(matches!(TrainConfig::from_path(&p), Err(Error::Config(_))));
    }

    #[test]
    fn segment_must_align_with_hop() {
        let mut c = TrainConfig::desk(Stage::Gan);
        c.segment_s = 0.505;
        assert!(c.validate().is_err());
        c.segment_s = 0.01;
        assert!(c.validate().is_err());
    }

    #[test]
    fn transient_range_is_bounded() {
        let mut c = TrainConfig::desk(Stage::Mfnet);
        c.mfnet.transient_snr_db = Span::new(-6.0, 10.0);
        assert!(c.validate().is_err());
        c.mfnet.transient_snr_db = Span::new(0.0, 5.0);
        c.validate().unwrap();
    }
}
