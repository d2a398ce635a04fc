//! Complex-domain restoration GAN: sub-band generator, multi-resolution
//! discriminators and their objectives.

pub mod config;
pub mod discriminator;
pub mod generator;
pub mod loss;

pub use config::{DiscriminatorBankConfig, GeneratorConfig, LossWeights, SizeProfile};
pub use discriminator::{DiscOutput, DiscriminatorBank};
pub use generator::{Generator, GeneratorStructure, StackBatch};
pub use loss::{discriminator_loss, feature_match_loss, generator_adv_loss, generator_objective, GeneratorLossTerms};
