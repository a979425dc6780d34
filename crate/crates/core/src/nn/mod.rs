//! Dense tensors and the reference convolution kernels.
//!
//! Every kernel accumulates in `f64` and rounds to `f32` once per output
//! element. For a given output element the terms are always added in the
//! order (input channel, kernel row, kernel column), which is what makes the
//! pointwise and single-channel depthwise kernels bit-identical to the
//! direct convolution with the matching kernel.

mod conv;
mod ops;
mod tensor;

pub use conv::{
    conv2d_direct, conv2d_direct_counted, conv_output_dim, depthwise_conv2d,
    depthwise_conv2d_counted, pointwise_conv2d, pointwise_conv2d_counted, ConvKind, ConvWeights,
    MacCount, MacSink,
};
pub use ops::{global_avg_pool, relu, relu_in_place, softmax};
pub use tensor::Tensor;
