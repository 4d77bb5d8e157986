use super::NnError;

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-5;

/// Class probabilities produced by a softmax layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f32>);

impl ProbVector {
    pub fn new(values: Vec<f32>) -> Result<Self, NnError> {
        if values.is_empty() {
            return Err(NnError::InvalidProbabilities("empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NnError::InvalidProbabilities(format!("element {v} outside [0, 1]")));
        }
        let sum: f64 = values.iter().map(|&v| v as f64).sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(NnError::InvalidProbabilities(format!("sum {sum} is not 1")));
        }
        Ok(ProbVector(values))
    }

    pub(crate) fn from_softmax(values: Vec<f32>) -> Self {
        ProbVector(values)
    }

    /// The discrete uniform distribution over `n` classes.
    pub fn uniform(n: usize) -> Self {
        ProbVector(vec![1.0 / n as f32; n])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The `k` highest-scoring classes as `(1-based class index, score)`, sorted
/// by descending score with ties going to the lower index.
pub fn top_k(p: &ProbVector, k: usize) -> Result<Vec<(usize, f32)>, NnError> {
    let n = p.len();
    if k == 0 || k > n {
        return Err(NnError::TopKRange { k, n });
    }
    let mut ranked: Vec<(usize, f32)> = p.0.iter().enumerate().map(|(i, &s)| (i + 1, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f32]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn top_one() {
        assert_eq!(top_k(&pv(&[0.1, 0.7, 0.2]), 1).unwrap(), vec![(2, 0.7)]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        assert_eq!(top_k(&pv(&[0.25, 0.25, 0.5]), 2).unwrap(), vec![(3, 0.5), (1, 0.25)]);
    }

    #[test]
    fn k_equal_n_is_permutation() {
        let p = pv(&[0.1, 0.3, 0.2, 0.4]);
        let mut idx: Vec<usize> = top_k(&p, 4).unwrap().into_iter().map(|(i, _)| i).collect();
        assert_eq!(idx, vec![4, 2, 3, 1]);
        idx.sort();
        assert_eq!(idx, vec![1, 2, 3, 4]);
    }

    #[test]
    fn k_out_of_range() {
        let p = pv(&[0.5, 0.5]);
        assert_eq!(top_k(&p, 0), Err(NnError::TopKRange { k: 0, n: 2 }));
        assert_eq!(top_k(&p, 3), Err(NnError::TopKRange { k: 3, n: 2 }));
    }

    #[test]
    fn rejects_invalid_vectors() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
    }
}
