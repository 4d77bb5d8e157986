//! Seeded stand-in models: scaled-down plain chains in the style of the
//! Darknet Reference (17 layers) and Extraction (28 layers) topologies, and a
//! two-block densely connected net whose routes never cross a block.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::weights::{self, BatchNorm, LayerWeights};
use super::{Activation, ConvParams, LayerKind, ModelConfig, PoolParams, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureArch {
    Plain17,
    Plain28,
    DenseBlock,
}

impl FixtureArch {
    pub const ALL: [FixtureArch; 3] = [FixtureArch::Plain17, FixtureArch::Plain28, FixtureArch::DenseBlock];

    pub fn name(self) -> &'static str {
        match self {
            FixtureArch::Plain17 => "plain17",
            FixtureArch::Plain28 => "plain28",
            FixtureArch::DenseBlock => "denseblock",
        }
    }

    pub fn input_shape(self) -> Shape {
        match self {
            FixtureArch::Plain17 | FixtureArch::Plain28 => Shape::new(32, 32, 3),
            FixtureArch::DenseBlock => Shape::new(16, 16, 3),
        }
    }

    fn layers(self, classes: usize) -> Vec<LayerKind> {
        use Activation::{Leaky, Linear};
        let conv = |filters, size, stride| {
            LayerKind::Convolutional(ConvParams {
                filters,
                size,
                stride,
                pad: true,
                activation: Leaky,
                batch_normalize: true,
                bias: true,
            })
        };
        let classifier = LayerKind::Convolutional(ConvParams {
            filters: classes,
            size: 1,
            stride: 1,
            pad: true,
            activation: Linear,
            batch_normalize: false,
            bias: true,
        });
        let max = |size, stride| LayerKind::MaxPool(PoolParams { size, stride });
        match self {
            FixtureArch::Plain17 => vec![
                conv(4, 3, 1),
                max(2, 2),
                conv(8, 3, 1),
                max(2, 2),
                conv(16, 3, 1),
                max(2, 2),
                conv(16, 3, 1),
                max(2, 2),
                conv(32, 3, 1),
                max(2, 1),
                conv(32, 3, 1),
                conv(16, 1, 1),
                conv(32, 3, 1),
                conv(16, 1, 1),
                classifier,
                LayerKind::AvgPool(None),
                LayerKind::Softmax,
            ],
            FixtureArch::Plain28 => {
                let mut l = vec![
                    conv(8, 5, 2),
                    max(2, 2),
                    conv(12, 3, 1),
                    max(2, 2),
                    conv(8, 1, 1),
                    conv(16, 3, 1),
                    conv(16, 1, 1),
                    conv(24, 3, 1),
                    max(2, 2),
                ];
                for _ in 0..4 {
                    l.push(conv(12, 1, 1));
                    l.push(conv(24, 3, 1));
                }
                l.extend([conv(24, 1, 1), conv(32, 3, 1), max(2, 2)]);
                for _ in 0..2 {
                    l.push(conv(16, 1, 1));
                    l.push(conv(32, 3, 1));
                }
                l.extend([conv(16, 1, 1), classifier, LayerKind::AvgPool(None), LayerKind::Softmax]);
                l
            }
            FixtureArch::DenseBlock => vec![
                // stem
                conv(4, 3, 1),
                // block 1: layers 2..=5
                conv(4, 3, 1),
                LayerKind::Route(vec![1, 2]),
                conv(4, 3, 1),
                LayerKind::Route(vec![1, 2, 4]),
                // transition
                conv(8, 1, 1),
                max(2, 2),
                // block 2: layers 8..=11
                conv(4, 3, 1),
                LayerKind::Route(vec![7, 8]),
                conv(4, 3, 1),
                LayerKind::Route(vec![7, 8, 10]),
                classifier,
                LayerKind::AvgPool(None),
                LayerKind::Softmax,
            ],
        }
    }
}

impl FromStr for FixtureArch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FixtureArch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown fixture architecture `{s}` (expected plain17, plain28 or denseblock)"))
    }
}

const CLASSIFIER_GAIN: f32 = 8.0;

/// Builds a fixture model and returns its config text and weights file.
///
/// Panics if `classes < 2`.
pub fn gen_fixture_model(arch: FixtureArch, seed: u64, classes: usize) -> (String, Vec<u8>) {
    assert!(classes >= 2, "fixture models need at least two classes");
    let config = ModelConfig::new(arch.input_shape(), arch.layers(classes)).expect("fixture topology is well-formed");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize, lo: f32, hi: f32| -> Vec<f32> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
    let params: Vec<LayerWeights> = config
        .layers()
        .iter()
        .map(|layer| match &layer.kind {
            LayerKind::Convolutional(p) => {
                let fan_in = layer.input.channels * p.size * p.size;
                // The classifier gets a larger gain so fixture outputs are not near-uniform.
                let gain = if p.batch_normalize { 1.0 } else { CLASSIFIER_GAIN };
                let bound = gain * (6.0 / fan_in as f32).sqrt();
                let biases = if p.bias {
                    uniform(p.filters, -0.1, 0.1)
                } else {
                    Vec::new()
                };
                let batch_norm = p.batch_normalize.then(|| BatchNorm {
                    scale: uniform(p.filters, 0.8, 1.2),
                    mean: uniform(p.filters, -0.1, 0.1),
                    variance: uniform(p.filters, 0.5, 1.5),
                });
                let filters = uniform(p.filters * fan_in, -bound, bound);
                LayerWeights::Convolutional {
                    biases,
                    batch_norm,
                    filters,
                }
            }
            LayerKind::Connected { outputs, .. } => {
                let bound = (6.0 / layer.input.len() as f32).sqrt();
                LayerWeights::Connected {
                    biases: uniform(*outputs, -0.1, 0.1),
                    weights: uniform(outputs * layer.input.len(), -bound, bound),
                }
            }
            _ => LayerWeights::None,
        })
        .collect();
    (config.to_text(), weights::encode(&params))
}

/// Deterministic labels of the form `class-0003-fixture-label`.
pub fn fixture_labels(classes: usize) -> Vec<String> {
    (1..=classes).map(|i| format!("class-{i:04}-fixture-label")).collect()
}

/// A seeded test image with every pixel in `[0.02, 1.0)`.
pub fn fixture_image(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a9e);
    let data = (0..shape.len()).map(|_| rng.random_range(0.02f32..1.0)).collect();
    Tensor::new(shape, data).expect("fixture image shape")
}
