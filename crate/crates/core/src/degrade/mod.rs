//! Distortion simulation for building (degraded, clean) training pairs.

pub mod corpus;
pub mod ops;
pub mod recipe;

pub use corpus::{
    build_corpus, load_pairs, render_record, replay_record, CorpusManifest, CorpusSummary,
    ManifestRecord, RecordFailure,
};
pub use ops::{
    adjust_loudness, apply_reverb, clip, codec_sim, drop_packets, inject_transient, lowpass,
    mix_noise, nr_artifact, CodecProfile, InjectedTransient, NrProfile, TRANSIENT_SNR_RANGE_DB,
};
pub use recipe::{utterance_seed, DegradationRecipe, RealizedDegradation, Span};
