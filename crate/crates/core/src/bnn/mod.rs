//! Desk-scale binarized network whose binary layers use a pluggable measure.
//!
//! The entry and head layers keep real weights. Binarized layers keep real
//! latent weights, binarize them on the forward pass and train them through
//! the straight-through estimator. Training computes the match frequencies
//! from ±1 moments in floating point; the packed-bit kernels in
//! [`crate::bitpack`] give the same numbers and are used to check them.

mod layers;
mod model;
mod tensor;
mod train;

pub use layers::{
    binarize_ste, binarize_ste_backward, sign, ste_gate, BatchNorm, Conv, Dense, GlobalAvgPool,
    HardTanh, Layer, MeasureKind, MeasureLayer, Mode, NamedTensor, Param, ParamMut, SignSte,
};
pub use model::{LoadError, ModelConfig, ModelVariant, ToyModel};
pub use tensor::{ConvGeometry, Tensor};
pub use train::{
    argmax, batch_tensor, softmax_cross_entropy, train, validate, TrainConfig, TrainError,
    TrainReport, Trainer,
};
