//! Weights on disk plus a JSON sidecar that ties them to their config and,
//! for MF-Net, to the GAN checkpoint it was trained against.

use std::path::{Path, PathBuf};

use candle_core::DType;
use serde::{Deserialize, Serialize};

use super::config::Stage;
use crate::error::{Error, Result};
use crate::gan::{Generator, GeneratorConfig};
use crate::mfnet::{MfNet, MfNetConfig};
use crate::nn::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub stage: Stage,
    pub config_hash: String,
    pub param_count: usize,
    pub step: usize,
    /// Digest of parameter names and values.
    pub weights_hash: String,
    /// `weights_hash` of the GAN checkpoint an MF-Net was trained on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gan_checkpoint_hash: Option<String>,
    /// Full model config, so the checkpoint alone rebuilds the network.
    pub model: serde_json::Value,
}

/// Sidecar path for a weights file: same stem, `.json` extension.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

fn write_meta(weights: &Path, meta: &CheckpointMeta) -> Result<()> {
    let side = sidecar_path(weights);
    std::fs::write(&side, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&side, e))
}

pub fn read_meta(weights: &Path) -> Result<CheckpointMeta> {
    let side = sidecar_path(weights);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", side.display())))
}

pub fn save_gan(ps: &ParamStore, cfg: &GeneratorConfig, step: usize, path: &Path) -> Result<CheckpointMeta> {
    ps.save(path)?;
    let meta = CheckpointMeta {
        stage: Stage::Gan,
        config_hash: cfg.hash()?,
        param_count: ps.count(),
        step,
        weights_hash: ps.digest()?,
        gan_checkpoint_hash: None,
        model: serde_json::to_value(cfg)?,
    };
    write_meta(path, &meta)?;
    Ok(meta)
}

pub fn save_mfnet(
    ps: &ParamStore,
    cfg: &MfNetConfig,
    step: usize,
    gan_hash: &str,
    path: &Path,
) -> Result<CheckpointMeta> {
    ps.save(path)?;
    let meta = CheckpointMeta {
        stage: Stage::Mfnet,
        config_hash: cfg.hash()?,
        param_count: ps.count(),
        step,
        weights_hash: ps.digest()?,
        gan_checkpoint_hash: Some(gan_hash.to_string()),
        model: serde_json::to_value(cfg)?,
    };
    write_meta(path, &meta)?;
    Ok(meta)
}

fn check_common(meta: &CheckpointMeta, stage: Stage, hash: &str, ps: &ParamStore, path: &Path) -> Result<()> {
    if meta.stage != stage {
        return Err(Error::config(format!(
            "{} is a {} checkpoint, expected {}",
            path.display(),
            meta.stage.as_str(),
            stage.as_str()
        )));
    }
    if meta.config_hash != hash {
        return Err(Error::config(format!(
            "{}: config hash in sidecar does not match its model config",
            path.display()
        )));
    }
    if meta.param_count != ps.count() {
        return Err(Error::config(format!(
            "{}: sidecar records {} parameters, model has {}",
            path.display(),
            meta.param_count,
            ps.count()
        )));
    }
    if ps.digest()? != meta.weights_hash {
        return Err(Error::config(format!("{}: weights do not match the sidecar hash", path.display())));
    }
    Ok(())
}

/// A generator restored from disk, in evaluation form (frozen parameters).
pub struct LoadedGan {
    pub params: ParamStore,
    pub model: Generator,
    pub meta: CheckpointMeta,
}

pub struct LoadedMfNet {
    pub params: ParamStore,
    pub model: MfNet,
    pub meta: CheckpointMeta,
}

pub fn load_gan(path: &Path, dtype: DType) -> Result<LoadedGan> {
    let meta = read_meta(path)?;
    let cfg: GeneratorConfig = serde_json::from_value(meta.model.clone())
        .map_err(|e| Error::config(format!("{}: bad generator config: {e}", path.display())))?;
    let mut params = ParamStore::frozen(0, dtype);
    let model = Generator::new(&mut params, &cfg)?;
    params.load(path)?;
    check_common(&meta, Stage::Gan, &cfg.hash()?, &params, path)?;
    Ok(LoadedGan { params, model, meta })
}

pub fn load_mfnet(path: &Path, dtype: DType) -> Result<LoadedMfNet> {
    let meta = read_meta(path)?;
    let cfg: MfNetConfig = serde_json::from_value(meta.model.clone())
        .map_err(|e| Error::config(format!("{}: bad MF-Net config: {e}", path.display())))?;
    let mut params = ParamStore::frozen(0, dtype);
    let model = MfNet::new(&mut params, &cfg)?;
    params.load(path)?;
    check_common(&meta, Stage::Mfnet, &cfg.hash()?, &params, path)?;
    if meta.gan_checkpoint_hash.is_none() {
        return Err(Error::config(format!(
            "{}: MF-Net sidecar does not name its GAN checkpoint",
            path.display()
        )));
    }
    Ok(LoadedMfNet { params, model, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gan_round_trip_preserves_weights() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GeneratorConfig::tiny();
        let mut ps = ParamStore::new(5, DType::F32);
        Generator::new(&mut ps, &cfg).unwrap();
        let p = dir.path().join("g.safetensors");
        let meta = save_gan(&ps, &cfg, 12, &p).unwrap();
        let loaded = load_gan(&p, DType::F32).unwrap();
        assert_eq!(loaded.meta, meta);
        assert_eq!(loaded.params.digest().unwrap(), ps.digest().unwrap());
        assert_eq!(meta.param_count, cfg.param_count());
        assert!(matches!(load_mfnet(&p, DType::F32), Err(Error::Config(_))));
    }

    #[test]
    fn tampered_sidecar_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MfNetConfig::tiny();
        let mut ps = ParamStore::new(5, DType::F32);
        MfNet::new(&mut ps, &cfg).unwrap();
        let p = dir.path().join("m.safetensors");
        let mut meta = save_mfnet(&ps, &cfg, 3, "abc", &p).unwrap();
        assert_eq!(load_mfnet(&p, DType::F32).unwrap().meta.gan_checkpoint_hash.as_deref(), Some("abc"));
        meta.config_hash = "0".repeat(64);
        write_meta(&p, &meta).unwrap();
        assert!(matches!(load_mfnet(&p, DType::F32), Err(Error::Config(_))));
    }
}
