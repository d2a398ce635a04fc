//! Signal transforms shared by every stage: framing, STFT/iSTFT, subband
//! split/merge, ERB filterbank and magnitude compression.

pub mod compress;
pub mod erb;
pub mod mrstft;
pub mod stft;
pub mod subband;
pub mod synth;
pub mod wav;
pub mod waveform;

pub use compress::{compress, decompress, DEFAULT_COMPRESSION};
pub use erb::{make_erb_filterbank, ErbFilterbank, DEFAULT_ERB_BANDS};
pub use mrstft::{mrstft_distance, StftResolution, DEFAULT_RESOLUTIONS};
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, StftProcessor, WindowKind};
pub use subband::{merge_subbands, split_subbands, SubbandStack, NUM_SUBBANDS};
pub use wav::{read_wav, read_wav_at, write_wav, write_wav_pcm16};
pub use waveform::{Waveform, FULL_BAND_RATE};
