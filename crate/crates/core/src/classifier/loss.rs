//! Joint margin-contrastive and binary cross-entropy objective.
//!
//! For a batch of N hidden feature rows `h_i`, predicted probabilities `p_i`
//! and targets `y_i`:
//!
//! ```text
//! L_CL    = (1/N²) Σ_i Σ_j [ y_ij D_ij² + (1 - y_ij) max(0, m - D_ij)² ]
//! L_CE    = -(1/N) Σ_i [ y_i ln p_i + (1 - y_i) ln(1 - p_i) ]
//! L_total = λ L_CL + (1 - λ) L_CE
//! ```
//!
//! where `D_ij = ||h_i - h_j||` and `y_ij = 1` iff `y_i = y_j`. The double sum
//! runs over all ordered pairs, diagonal included.

/// Hidden features, probabilities and targets of one mini-batch, with the
/// pairwise distance matrix precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pub hidden: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub labels: Vec<f64>,
    /// Row-major N x N Euclidean distances between hidden rows.
    pub distances: Vec<f64>,
}

impl LossBatch {
    pub fn new(hidden: Vec<Vec<f64>>, probs: Vec<f64>, labels: Vec<f64>) -> Self {
        let n = hidden.len();
        assert_eq!(probs.len(), n, "one probability per hidden row");
        assert_eq!(labels.len(), n, "one label per hidden row");
        let mut distances = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = hidden[i]
                    .iter()
                    .zip(&hidden[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                distances[i * n + j] = d;
                distances[j * n + i] = d;
            }
        }
        LossBatch {
            hidden,
            probs,
            labels,
            distances,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.len() + j]
    }

    pub fn same_label(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }
}

pub fn contrastive_loss(batch: &LossBatch, margin: f64) -> f64 {
    let n = batch.len();
    if n == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = batch.distance(i, j);
            sum += if batch.same_label(i, j) {
                d * d
            } else {
                (margin - d).max(0.0).powi(2)
            };
        }
    }
    sum / (n * n) as f64
}

pub fn bce_loss(batch: &LossBatch) -> f64 {
    let n = batch.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = batch
        .probs
        .iter()
        .zip(&batch.labels)
        .map(|(&p, &y)| y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        .sum();
    -sum / n as f64
}

pub fn total_loss(batch: &LossBatch, lambda: f64, margin: f64) -> f64 {
    lambda * contrastive_loss(batch, margin) + (1.0 - lambda) * bce_loss(batch)
}

/// Gradient of `L_CL` with respect to every hidden row.
///
/// Each `h_i` enters both row i and column i of the distance matrix, which
/// doubles every pair's contribution. Different-label pairs at zero distance
/// contribute nothing (subgradient choice).
pub fn contrastive_grad_hidden(batch: &LossBatch, margin: f64) -> Vec<Vec<f64>> {
    let n = batch.len();
    let dim = batch.hidden.first().map_or(0, Vec::len);
    let scale = 4.0 / (n * n) as f64;
    let mut grads = vec![vec![0.0; dim]; n];
    for (i, gi) in grads.iter_mut().enumerate() {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = batch.distance(i, j);
            let coeff = if batch.same_label(i, j) {
                scale
            } else if d > 0.0 && d < margin {
                -scale * (margin - d) / d
            } else {
                0.0
            };
            if coeff != 0.0 {
                for ((g, a), b) in gi.iter_mut().zip(&batch.hidden[i]).zip(&batch.hidden[j]) {
                    *g += coeff * (a - b);
                }
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_fixture(probs: [f64; 2]) -> LossBatch {
        let mut h2 = vec![0.0; 8];
        h2[0] = 0.3;
        h2[1] = 0.4;
        LossBatch::new(vec![vec![0.0; 8], h2], probs.to_vec(), vec![1.0, 0.0])
    }

    #[test]
    fn single_sample_contrastive_is_zero() {
        let b = LossBatch::new(vec![vec![1.0, 2.0]], vec![0.7], vec![1.0]);
        assert_eq!(contrastive_loss(&b, 1.0), 0.0);
    }

    #[test]
    fn hand_derived_pair() {
        let b = pair_fixture([0.5, 0.5]);
        assert!((b.distance(0, 1) - 0.5).abs() < 1e-15);
        assert!((contrastive_loss(&b, 1.0) - 0.125).abs() < 1e-12);
        assert!((bce_loss(&b) - std::f64::consts::LN_2).abs() < 1e-12);
        let expected = 0.3 * 0.125 + 0.7 * std::f64::consts::LN_2;
        assert!((total_loss(&b, 0.3, 1.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_direct_evaluation() {
        let b = pair_fixture([0.9, 0.2]);
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((bce_loss(&b) - expected).abs() < 1e-15);
        assert!((expected - 0.164252).abs() < 1e-6);
    }

    #[test]
    fn identical_rows_same_label_zero() {
        let b = LossBatch::new(vec![vec![0.5, -1.0]; 5], vec![0.9; 5], vec![1.0; 5]);
        assert_eq!(contrastive_loss(&b, 1.0), 0.0);
        assert!(contrastive_grad_hidden(&b, 1.0).iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn lambda_endpoints() {
        let b = pair_fixture([0.9, 0.2]);
        assert_eq!(total_loss(&b, 0.0, 1.0), bce_loss(&b));
        assert_eq!(total_loss(&b, 1.0, 1.0), contrastive_loss(&b, 1.0));
    }

    #[test]
    fn distances_are_symmetric_with_zero_diagonal() {
        let hidden = (0..5)
            .map(|i| (0..3).map(|k| ((i * 7 + k * 3) % 5) as f64).collect())
            .collect();
        let b = LossBatch::new(hidden, vec![0.5; 5], vec![0.0, 1.0, 0.0, 1.0, 1.0]);
        for i in 0..5 {
            assert_eq!(b.distance(i, i), 0.0);
            for j in 0..5 {
                assert_eq!(b.distance(i, j), b.distance(j, i));
                assert!(b.distance(i, j) >= 0.0);
            }
        }
    }
}
