use super::layers;
use super::weights::{self, LayerWeights};
use super::{LayerKind, ModelConfig, NnError, ProbVector, Shape, Tensor};

/// A shape-checked model with its parameters. Immutable once built, so a
/// single instance can back any number of concurrent forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDef {
    config: ModelConfig,
    weights: Vec<LayerWeights>,
}

/// Parses a model config and its `IRSW` weights file.
pub fn parse_network(config_text: &str, weights_bytes: &[u8]) -> Result<NetworkDef, NnError> {
    let config = ModelConfig::parse(config_text)?;
    let weights = weights::decode(&config, weights_bytes)?;
    Ok(NetworkDef { config, weights })
}

impl NetworkDef {
    pub fn new(config: ModelConfig, weights: Vec<LayerWeights>) -> Result<Self, NnError> {
        if weights.len() != config.len() {
            return Err(NnError::WeightLength {
                expected: config.len(),
                actual: weights.len(),
            });
        }
        for (layer, w) in config.layers().iter().zip(&weights) {
            let expected = LayerWeights::expected_len(layer);
            let kind_ok = matches!(
                (&layer.kind, w),
                (LayerKind::Convolutional(_), LayerWeights::Convolutional { .. })
                    | (LayerKind::Connected { .. }, LayerWeights::Connected { .. })
                    | (
                        LayerKind::MaxPool(_) | LayerKind::AvgPool(_) | LayerKind::Route(_) | LayerKind::Softmax,
                        LayerWeights::None
                    )
            );
            if !kind_ok || w.len() != expected {
                return Err(NnError::Shape {
                    layer: layer.index,
                    message: format!(
                        "expected {expected} {} parameters, found {}",
                        layer.kind.name(),
                        w.len()
                    ),
                });
            }
        }
        Ok(NetworkDef { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &[LayerWeights] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.config.len()
    }

    pub fn is_empty(&self) -> bool {
        self.config.is_empty()
    }

    pub fn input_shape(&self) -> Shape {
        self.config.input_shape()
    }

    pub fn to_config_text(&self) -> String {
        self.config.to_text()
    }

    pub fn to_weights_bytes(&self) -> Vec<u8> {
        weights::encode(&self.weights)
    }

    /// Total learned parameter count.
    pub fn parameter_count(&self) -> usize {
        weights::parameter_count(&self.config)
    }

    /// Checks that layers `from..=to` can run on the output of layer `from - 1`
    /// alone, i.e. no route inside the range reaches further back.
    pub fn check_range(&self, from: usize, to: usize) -> Result<(), NnError> {
        let n = self.len();
        if from == 0 || from > to || to > n {
            return Err(NnError::InvalidRange { from, to, layers: n });
        }
        for layer in &self.config.layers()[from - 1..to] {
            if let LayerKind::Route(sources) = &layer.kind {
                if let Some(&s) = sources.iter().find(|&&s| s + 1 < from) {
                    return Err(NnError::CrossBoundaryRoute {
                        layer: layer.index,
                        source_index: s,
                        from,
                    });
                }
            }
        }
        Ok(())
    }

    /// Outputs of layers `from..=to`, given `x` as the output of layer `from - 1`.
    fn run(&self, from: usize, to: usize, x: &Tensor) -> Result<Vec<Tensor>, NnError> {
        self.check_range(from, to)?;
        let expected = self.config.output_of(from - 1);
        if x.shape() != expected {
            return Err(NnError::InputShape {
                expected,
                actual: x.shape(),
            });
        }
        let layers = &self.config.layers()[from - 1..to];
        // slot 0 holds x, slot j holds the output of layer from - 1 + j
        let mut slots: Vec<Tensor> = Vec::with_capacity(layers.len() + 1);
        slots.push(x.clone());
        for layer in layers {
            let out = match &layer.kind {
                LayerKind::Route(sources) => {
                    let parts: Vec<&Tensor> = sources.iter().map(|&s| &slots[s + 1 - from]).collect();
                    layers::concat(&parts)
                }
                _ => layers::apply(layer, &self.weights[layer.index - 1], slots.last().unwrap()),
            };
            slots.push(out);
        }
        slots.remove(0);
        Ok(slots)
    }

    /// Output of every layer, in order, for a full-network input.
    pub fn layer_outputs(&self, x: &Tensor) -> Result<Vec<Tensor>, NnError> {
        if self.is_empty() {
            return Ok(Vec::new());
        }
        self.run(1, self.len(), x)
    }
}

/// Runs layers `from_layer..=to_layer` (1-based, inclusive) on `x`, which must
/// have the output shape of layer `from_layer - 1` (the network input when
/// `from_layer` is 1).
pub fn forward_range(net: &NetworkDef, from_layer: usize, to_layer: usize, x: &Tensor) -> Result<Tensor, NnError> {
    Ok(net.run(from_layer, to_layer, x)?.pop().expect("non-empty range"))
}

/// Full forward pass of a network that ends in softmax.
pub fn forward(net: &NetworkDef, x: &Tensor) -> Result<ProbVector, NnError> {
    if !net.config.ends_in_softmax() {
        return Err(NnError::NoSoftmax);
    }
    if x.shape() != net.input_shape() {
        return Err(NnError::InputShape {
            expected: net.input_shape(),
            actual: x.shape(),
        });
    }
    let out = forward_range(net, 1, net.len(), x)?;
    Ok(ProbVector::from_softmax(out.into_data()))
}
