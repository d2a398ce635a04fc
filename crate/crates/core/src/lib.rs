//! Two-stage full-band speech restoration: a complex-domain restoration GAN
//! followed by a multi-band fusion enhancer, with the distortion simulator
//! and evaluation harness used to train and check them.

pub mod degrade;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod gan;
pub mod mfnet;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
