use crate::nn::ProbVector;

use super::AssessError;

/// Probabilities in the second KL argument are floored here before
/// renormalization, so an IR the oracle rules out entirely still scores finite.
pub const SMOOTHING_FLOOR: f64 = 1e-10;

/// KL divergence `sum_k p_k log10(p_k / q_k)`.
///
/// Both vectors are renormalized in f64; `q` is floored at
/// [`SMOOTHING_FLOOR`] first. Terms with `p_k = 0` contribute nothing.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64, AssessError> {
    if p.len() != q.len() {
        return Err(AssessError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let p = normalized(p.as_slice().iter().map(|&v| v as f64));
    let q = normalized(q.as_slice().iter().map(|&v| (v as f64).max(SMOOTHING_FLOOR)));
    Ok(p.iter()
        .zip(&q)
        .filter(|(pk, _)| **pk > 0.0)
        .map(|(pk, qk)| pk * (pk / qk).log10())
        .sum())
}

/// Divergence of `p` from the discrete uniform distribution over its classes,
/// the score of an input that reveals nothing about its class.
pub fn uniform_baseline(p: &ProbVector) -> f64 {
    kl_divergence(p, &ProbVector::uniform(p.len())).expect("equal lengths")
}

fn normalized(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = values.collect();
    let sum: f64 = v.iter().sum();
    v.into_iter().map(|x| x / sum).collect()
}

/// Ratio of an adversary's reconstruction distance with the IR to the
/// distance using background knowledge alone. A value at or below the chosen
/// epsilon marks a confidentiality violation.
pub fn epsilon_ratio(dist_with_ir: f64, dist_background_only: f64) -> Result<f64, AssessError> {
    if dist_background_only.is_nan() || dist_background_only <= 0.0 || dist_with_ir.is_nan() || dist_with_ir < 0.0 {
        return Err(AssessError::InvalidDistances {
            with_ir: dist_with_ir,
            background: dist_background_only,
        });
    }
    Ok(dist_with_ir / dist_background_only)
}
