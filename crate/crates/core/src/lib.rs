//! Inference engine for a lightweight depthwise-separable CNN person
//! detector.
//!
//! The pipeline, front to back:
//!
//! 1. [`media`] decodes PPM/PGM frames, resizes them to the network input
//!    and maps pixels to `[-1, 1]`.
//! 2. [`graph`] describes the layer schedule (one conventional layer, twelve
//!    depthwise/pointwise pairs, one global pool) and runs it with the
//!    kernels in [`nn`], capturing intermediate feature maps.
//! 3. [`ssd`] turns the captured maps into class scores and box offsets per
//!    default box, decodes them, and suppresses overlaps.
//! 4. [`eval`] scores detections against ground truth and measures
//!    throughput; [`complexity`] counts the multiply-accumulates each layer
//!    costs.
//!
//! Weights live in a [`weights::WeightStore`], persisted in the `LCNW`
//! binary format or generated from a seed.

pub mod complexity;
pub mod error;
pub mod eval;
pub mod graph;
pub mod media;
pub mod nn;
pub mod ssd;
pub mod weights;

pub use error::{Error, Result};
pub use graph::{
    build_lcnn_default, forward, validate_config, ForwardResult, Network, NetworkConfig,
};
pub use nn::{ConvWeights, Tensor};
pub use ssd::{detect, Detection, Detector, HeadSpec};
pub use weights::{load_weights, random_init, save_weights, WeightStore};
