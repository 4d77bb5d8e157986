//! A small deterministic ConvNet inference engine.
//!
//! Models are described by a sectioned text config (`[net]`, `[convolutional]`,
//! `[maxpool]`, `[avgpool]`, `[route]`, `[connected]`, `[softmax]`) plus an
//! `IRSW` binary weights file. Every forward pass, full or range-restricted,
//! runs the same per-layer kernels with a fixed accumulation order, so running
//! layers `1..=i` and then `i+1..=n` reproduces the full pass bit for bit.

mod config;
mod fixture;
mod layers;
mod network;
mod probs;
mod tensor;
mod weights;

pub use config::{Activation, ConvParams, LayerKind, LayerSpec, ModelConfig, PoolParams};
pub use fixture::{fixture_image, fixture_labels, gen_fixture_model, FixtureArch};
pub use network::{forward, forward_range, parse_network, NetworkDef};
pub use probs::{top_k, ProbVector};
pub use tensor::{resize_bilinear, Shape, Tensor};
pub use weights::{BatchNorm, LayerWeights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use thiserror::Error;

/// Slope of the negative half of the leaky activation.
pub const LEAKY_SLOPE: f32 = 0.1;

/// Added to the running variance before the batch-norm square root.
pub const BATCH_NORM_EPSILON: f32 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("layer {layer}: route source must precede layer (source {source_index})")]
    RouteOrder { layer: usize, source_index: usize },
    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },
    #[error("weights length mismatch: expected {expected} bytes, found {actual}")]
    WeightLength { expected: usize, actual: usize },
    #[error("weights header: {0}")]
    WeightHeader(String),
    #[error("tensor {shape} needs {expected} values, got {actual}")]
    DataLength {
        shape: Shape,
        expected: usize,
        actual: usize,
    },
    #[error("tensor shape {0} has a zero dimension")]
    EmptyShape(Shape),
    #[error("tensor encoding: {0}")]
    TensorEncoding(String),
    #[error("input shape {actual} does not match expected {expected}")]
    InputShape { expected: Shape, actual: Shape },
    #[error("invalid layer range {from}..={to} for a {layers}-layer network")]
    InvalidRange { from: usize, to: usize, layers: usize },
    #[error("layer {layer} routes from layer {source_index}, which is outside the range starting at {from}")]
    CrossBoundaryRoute {
        layer: usize,
        source_index: usize,
        from: usize,
    },
    #[error("network does not end in a softmax layer")]
    NoSoftmax,
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("k = {k} out of range 1..={n}")]
    TopKRange { k: usize, n: usize },
}
