//! Two-stage training: the restoration GAN on (degraded, clean) pairs, then
//! MF-Net on frozen GAN outputs with injected transients.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod gan_stage;
pub mod log;
pub mod mfnet_stage;
pub mod optim;

use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};

use crate::degrade::{load_pairs, CorpusManifest};
use crate::dsp::Waveform;
use crate::error::{Error, Result};

pub use checkpoint::{load_gan, load_mfnet, read_meta, CheckpointMeta, LoadedGan, LoadedMfNet};
pub use config::{GanStageConfig, MfnetStageConfig, OptimConfig, Stage, TrainConfig};
pub use gan_stage::{reconstruction_curve, reconstruction_loss, train_gan, train_gan_with, GAN_TERMS};
pub use log::{read_log, LogRecord};
pub use mfnet_stage::{
    render_gan_outputs, render_in_memory, train_mfnet, train_mfnet_with, RenderedRecord, MFNET_TERMS,
};

/// Term values of one optimization step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLosses {
    pub step: usize,
    pub terms: Vec<(String, f64)>,
}

impl StepLosses {
    fn new(step: usize, values: &[(&str, f64)]) -> Self {
        Self {
            step,
            terms: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub stage: Stage,
    pub steps: usize,
    /// Weights of the final step; the sidecar sits next to it.
    pub checkpoint: PathBuf,
    pub meta: CheckpointMeta,
    pub log: PathBuf,
    pub history: Vec<StepLosses>,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn load_training_pairs(corpus: &Path) -> Result<Vec<(Waveform, Waveform)>> {
    let manifest = CorpusManifest::load(corpus)?;
    if manifest.records.is_empty() {
        return Err(Error::config(format!("{} lists no utterances", corpus.display())));
    }
    Ok(load_pairs(&manifest)?.into_iter().map(|(_, d, c)| (d, c)).collect())
}

/// Run `f` on a one-thread pool when `single` is set.
fn run_scoped<T: Send>(single: bool, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if !single {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(f)
}
