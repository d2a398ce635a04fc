//! Multi-band fusion enhancer that removes residual transient noise and
//! artifacts from restored speech.

pub mod config;
pub mod model;

pub use config::{MfNetConfig, DEFAULT_SPLIT_HZ};
pub use model::{MfNet, MfNetOutput, SpecBatch};
