//! FLOP accounting per layer and the share of work a FrontNet keeps inside
//! the enclave.
//!
//! One multiply-accumulate counts as two FLOPs. Batch-norm costs two ops per
//! output element, a bias add one; activations are free. Route layers count
//! one op per moved element and softmax five per element.

use std::fmt::Write as _;

use thiserror::Error;

use crate::nn::{LayerKind, LayerSpec, ModelConfig, NnError, Shape};

/// exp, max, subtract, sum and divide per softmax element.
pub const SOFTMAX_OPS_PER_ELEMENT: u64 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("cut {cut} outside 1..{layers}")]
    CutOutOfRange { cut: usize, layers: usize },
}

/// FLOPs of one resolved layer.
pub fn layer_flops(layer: &LayerSpec) -> u64 {
    let out = layer.output;
    let out_elems = out.len() as u64;
    match &layer.kind {
        LayerKind::Convolutional(p) => {
            let k2 = (p.size * p.size) as u64;
            let mut flops = 2 * k2 * layer.input.channels as u64 * out_elems;
            if p.bias {
                flops += out_elems;
            }
            if p.batch_normalize {
                flops += 2 * out_elems;
            }
            flops
        }
        LayerKind::MaxPool(p) | LayerKind::AvgPool(Some(p)) => out_elems * (p.size * p.size) as u64,
        LayerKind::AvgPool(None) => layer.input.len() as u64,
        LayerKind::Route(_) => out_elems,
        LayerKind::Connected { outputs, .. } => 2 * layer.input.len() as u64 * *outputs as u64,
        LayerKind::Softmax => SOFTMAX_OPS_PER_ELEMENT * out_elems,
    }
}

/// FLOPs of a standalone layer applied to `input`. A route here may only
/// name source 0, the given input.
pub fn layer_flops_for(kind: &LayerKind, input: Shape) -> Result<u64, WorkloadError> {
    let config = ModelConfig::new(input, vec![kind.clone()])?;
    Ok(layer_flops(config.layer(1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopProfile {
    pub kinds: Vec<&'static str>,
    pub per_layer: Vec<u64>,
    /// Prefix sums divided by the total; ends at exactly 1.0 when the total
    /// is positive.
    pub cumulative: Vec<f64>,
    pub total: u64,
}

pub fn flop_profile(config: &ModelConfig) -> FlopProfile {
    let per_layer: Vec<u64> = config.layers().iter().map(layer_flops).collect();
    let total: u64 = per_layer.iter().sum();
    let mut running = 0u64;
    let cumulative = per_layer
        .iter()
        .map(|&f| {
            running += f;
            if total == 0 {
                0.0
            } else {
                running as f64 / total as f64
            }
        })
        .collect();
    FlopProfile {
        kinds: config.layers().iter().map(|l| l.kind.name()).collect(),
        per_layer,
        cumulative,
        total,
    }
}

/// Fraction of all FLOPs spent in layers `1..=cut`.
pub fn frontnet_fraction(profile: &FlopProfile, cut: usize) -> Result<f64, WorkloadError> {
    let layers = profile.per_layer.len();
    if cut == 0 || cut >= layers {
        return Err(WorkloadError::CutOutOfRange { cut, layers });
    }
    Ok(profile.cumulative[cut - 1])
}

impl FlopProfile {
    /// `layer\tkind\tflops\tcumulative_fraction` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, ((kind, flops), frac)) in self.kinds.iter().zip(&self.per_layer).zip(&self.cumulative).enumerate() {
            let _ = writeln!(out, "{}\t{kind}\t{flops}\t{frac:.9}", i + 1);
        }
        out
    }
}
