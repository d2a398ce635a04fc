//! Minimal neural-network toolkit on top of candle tensors.

pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod rnn;
pub mod spectral;
pub mod unfold;

pub use layers::{
    cat, leaky_relu, sigmoid, Conv2d, Conv2dSpec, ConvTransposeF2, DepthwiseConv1d, LayerNorm,
    Linear, PRelu, TimePad,
};
pub use gradcheck::{check_gradients, GradSample};
pub use params::{Init, ParamStore};
pub use rnn::{BiLstm, Lstm};
pub use spectral::{
    compress_complex, decompress_complex, waveform_loss, Istft, MagnitudeStft, MrStftLoss,
};
