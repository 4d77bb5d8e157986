//! Layer-by-layer leakage assessment.
//!
//! Each hidden layer's feature maps are projected to images and classified by
//! an oracle network. A layer's distance to the input is the smallest KL
//! divergence between the input's oracle classification and any of its
//! feature-map classifications; `delta` divides that by the input's divergence
//! from the uniform distribution. A cut at layer `i` is acceptable only when
//! every layer from `i` on has `delta > 1` and no route crosses the cut.

mod kl;
mod projection;
mod report;

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::nn::{forward, forward_range, LayerKind, NetworkDef, NnError, ProbVector, Tensor};

pub use kl::{epsilon_ratio, kl_divergence, uniform_baseline, SMOOTHING_FLOOR};
pub use projection::{fit_to_shape, project_feature_maps, IRImageSet};
pub use report::AssessmentReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssessError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("probability vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("layer {layer} is not assessable in a {layers}-layer network")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("input of shape {input} cannot be fed to the oracle expecting {oracle}")]
    OracleInput {
        input: crate::nn::Shape,
        oracle: crate::nn::Shape,
    },
    #[error("empty input set")]
    EmptyInputSet,
    #[error("distance ratio undefined for {with_ir} / {background}")]
    InvalidDistances { with_ir: f64, background: f64 },
}

/// KL statistics of one layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerKLStats {
    pub layer: usize,
    pub min_kl: f64,
    pub max_kl: f64,
    /// 1-based feature map achieving `min_kl`.
    pub argmin: usize,
    pub delta: f64,
    /// Uniform baseline of the input these statistics came from.
    pub baseline: f64,
}

/// `min_kl / baseline`. A baseline of zero means the oracle cannot tell the
/// input from noise, so any positive distance counts as safe.
pub fn delta_ratio(min_kl: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        min_kl / baseline
    } else if min_kl > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn oracle_probs(irval: &NetworkDef, x: &Tensor) -> Result<ProbVector, AssessError> {
    let shape = irval.input_shape();
    if x.shape() == shape {
        return Ok(forward(irval, x)?);
    }
    let fitted = fit_to_shape(x, shape).ok_or(AssessError::OracleInput {
        input: x.shape(),
        oracle: shape,
    })?;
    Ok(forward(irval, &fitted)?)
}

fn stats_for_ir(
    layer: usize,
    ir: &Tensor,
    reference: &ProbVector,
    baseline: f64,
    irval: &NetworkDef,
) -> Result<LayerKLStats, AssessError> {
    let images = project_feature_maps(layer, ir, irval.input_shape()).images;
    let scores: Vec<f64> = images
        .par_iter()
        .map(|img| kl_divergence(reference, &forward(irval, img)?))
        .collect::<Result<_, AssessError>>()?;
    let (mut argmin, mut min_kl, mut max_kl) = (0, f64::INFINITY, f64::NEG_INFINITY);
    for (j, &s) in scores.iter().enumerate() {
        if s < min_kl {
            min_kl = s;
            argmin = j;
        }
        max_kl = max_kl.max(s);
    }
    Ok(LayerKLStats {
        layer,
        min_kl,
        max_kl,
        argmin: argmin + 1,
        delta: delta_ratio(min_kl, baseline),
        baseline,
    })
}

/// Scores layer `layer_i` of `irgen` for input `x` against the oracle `irval`.
pub fn assess_layer(
    x: &Tensor,
    irgen: &NetworkDef,
    irval: &NetworkDef,
    layer_i: usize,
) -> Result<LayerKLStats, AssessError> {
    if layer_i == 0 || layer_i >= irgen.len() {
        return Err(AssessError::LayerOutOfRange {
            layer: layer_i,
            layers: irgen.len(),
        });
    }
    let reference = oracle_probs(irval, x)?;
    let baseline = uniform_baseline(&reference);
    let ir = forward_range(irgen, 1, layer_i, x)?;
    stats_for_ir(layer_i, &ir, &reference, baseline, irval)
}

/// Layers `i` in `[1, n)` at which the network can be cut: no route after `i`
/// reads the output of any layer before `i`.
pub fn valid_partition_points(net: &NetworkDef) -> BTreeSet<usize> {
    let n = net.len();
    // earliest layer any route at or after position t still reads
    let mut earliest_read = vec![usize::MAX; n + 2];
    for layer in net.config().layers().iter().rev() {
        let own = match &layer.kind {
            LayerKind::Route(sources) => sources.iter().copied().min().unwrap_or(usize::MAX),
            _ => usize::MAX,
        };
        earliest_read[layer.index] = own.min(earliest_read[layer.index + 1]);
    }
    (1..n).filter(|&i| earliest_read[i + 1] >= i).collect()
}

/// Smallest valid `i` such that `delta_t > 1` for every assessed `t >= i`.
/// `deltas[0]` is layer 1.
pub fn choose_partition(deltas: &[f64], valid: &BTreeSet<usize>) -> Option<usize> {
    let mut suffix_start = deltas.len() + 1;
    while suffix_start > 1 && deltas[suffix_start - 2] > 1.0 {
        suffix_start -= 1;
    }
    if suffix_start > deltas.len() {
        return None;
    }
    valid.range(suffix_start..=deltas.len()).next().copied()
}

/// Assesses every hidden layer over a set of inputs. Each layer keeps the
/// statistics of the input with the smallest delta; the cut follows from those
/// worst-case deltas.
pub fn assess_model(x_set: &[Tensor], irgen: &NetworkDef, irval: &NetworkDef) -> Result<AssessmentReport, AssessError> {
    if x_set.is_empty() {
        return Err(AssessError::EmptyInputSet);
    }
    let assessable = irgen.len().saturating_sub(1);
    let mut worst: Vec<Option<LayerKLStats>> = vec![None; assessable];
    let mut uniform_baseline_min = f64::INFINITY;
    for x in x_set {
        let reference = oracle_probs(irval, x)?;
        let baseline = uniform_baseline(&reference);
        uniform_baseline_min = uniform_baseline_min.min(baseline);
        let outputs = irgen.layer_outputs(x)?;
        for (pos, (slot, ir)) in worst.iter_mut().zip(&outputs).enumerate() {
            let stats = stats_for_ir(pos + 1, ir, &reference, baseline, irval)?;
            if slot.as_ref().is_none_or(|cur| stats.delta < cur.delta) {
                *slot = Some(stats);
            }
        }
    }
    let layers: Vec<LayerKLStats> = worst.into_iter().map(|s| s.expect("every layer scored")).collect();
    let valid = valid_partition_points(irgen);
    let deltas: Vec<f64> = layers.iter().map(|s| s.delta).collect();
    let chosen = choose_partition(&deltas, &valid);
    Ok(AssessmentReport {
        input_id: format!("{} input(s)", x_set.len()),
        uniform_baseline: uniform_baseline_min,
        layers,
        valid,
        chosen,
    })
}
