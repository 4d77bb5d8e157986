use super::{LayerKind, LayerSpec, ModelConfig, NnError};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"IRSW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Vec<f32>,
    pub mean: Vec<f32>,
    pub variance: Vec<f32>,
}

/// Learned parameters of one layer. Parameter-free layers carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    None,
    Convolutional {
        /// Empty when the layer is declared with `bias=0`.
        biases: Vec<f32>,
        batch_norm: Option<BatchNorm>,
        /// `[filter][input channel][kernel row][kernel column]`
        filters: Vec<f32>,
    },
    Connected {
        biases: Vec<f32>,
        /// `[output][input]`
        weights: Vec<f32>,
    },
}

impl LayerWeights {
    /// Number of f32 parameters this layer's spec implies.
    pub fn expected_len(layer: &LayerSpec) -> usize {
        match &layer.kind {
            LayerKind::Convolutional(p) => {
                let biases = if p.bias { p.filters } else { 0 };
                let bn = if p.batch_normalize { 3 * p.filters } else { 0 };
                biases + bn + p.filters * layer.input.channels * p.size * p.size
            }
            LayerKind::Connected { outputs, .. } => outputs + outputs * layer.input.len(),
            _ => 0,
        }
    }

    /// Consume this layer's parameters from the front of `values`.
    pub(crate) fn take(layer: &LayerSpec, values: &mut &[f32]) -> LayerWeights {
        let mut next = |n: usize| {
            let (head, tail) = values.split_at(n);
            *values = tail;
            head.to_vec()
        };
        match &layer.kind {
            LayerKind::Convolutional(p) => {
                let biases = next(if p.bias { p.filters } else { 0 });
                let batch_norm = p.batch_normalize.then(|| BatchNorm {
                    scale: next(p.filters),
                    mean: next(p.filters),
                    variance: next(p.filters),
                });
                let filters = next(p.filters * layer.input.channels * p.size * p.size);
                LayerWeights::Convolutional {
                    biases,
                    batch_norm,
                    filters,
                }
            }
            LayerKind::Connected { outputs, .. } => {
                let biases = next(*outputs);
                let weights = next(outputs * layer.input.len());
                LayerWeights::Connected { biases, weights }
            }
            _ => LayerWeights::None,
        }
    }

    pub(crate) fn append_to(&self, out: &mut Vec<f32>) {
        match self {
            LayerWeights::None => {}
            LayerWeights::Convolutional {
                biases,
                batch_norm,
                filters,
            } => {
                out.extend_from_slice(biases);
                if let Some(bn) = batch_norm {
                    out.extend_from_slice(&bn.scale);
                    out.extend_from_slice(&bn.mean);
                    out.extend_from_slice(&bn.variance);
                }
                out.extend_from_slice(filters);
            }
            LayerWeights::Connected { biases, weights } => {
                out.extend_from_slice(biases);
                out.extend_from_slice(weights);
            }
        }
    }

    pub(crate) fn len(&self) -> usize {
        let mut v = Vec::new();
        self.append_to(&mut v);
        v.len()
    }
}

pub(crate) fn parameter_count(config: &ModelConfig) -> usize {
    config.layers().iter().map(LayerWeights::expected_len).sum()
}

pub(crate) fn decode(config: &ModelConfig, bytes: &[u8]) -> Result<Vec<LayerWeights>, NnError> {
    let expected = 8 + 4 * parameter_count(config);
    if bytes.len() < 8 {
        return Err(NnError::WeightLength {
            expected,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != WEIGHTS_MAGIC {
        return Err(NnError::WeightHeader("missing IRSW magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(NnError::WeightHeader(format!("unsupported version {version}")));
    }
    if bytes.len() != expected {
        return Err(NnError::WeightLength {
            expected,
            actual: bytes.len(),
        });
    }
    let values: Vec<f32> = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut rest = values.as_slice();
    Ok(config
        .layers()
        .iter()
        .map(|layer| LayerWeights::take(layer, &mut rest))
        .collect())
}

pub(crate) fn encode(weights: &[LayerWeights]) -> Vec<u8> {
    let mut values = Vec::new();
    for w in weights {
        w.append_to(&mut values);
    }
    let mut out = Vec::with_capacity(8 + values.len() * 4);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
