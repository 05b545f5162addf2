//! Contrastive pair loss, kept as the pair-confidence baseline.

use ndarray::Array2;

use super::{check_labels, SimilarityMatrix};
use crate::error::{Error, Result};

/// Pair-loss matrix: positive pairs incur `1 − Sᵢⱼ`, negative pairs
/// `max(0, Sᵢⱼ − margin)`, the diagonal is excluded.
pub fn contrastive_pair_loss(
    s: &SimilarityMatrix,
    labels: &[usize],
    margin: f64,
) -> Result<Array2<f64>> {
    check_labels(labels, s.n(), "contrastive_pair_loss")?;
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::Domain(format!(
            "contrastive_pair_loss: margin must be nonnegative, got {margin}"
        )));
    }
    let m = s.matrix();
    let n = s.n();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            out[(i, j)] = if labels[i] == labels[j] {
                1.0 - m[(i, j)]
            } else {
                (m[(i, j)] - margin).max(0.0)
            };
        }
    }
    Ok(out)
}

/// Gradient of `Σᵢⱼ wᵢⱼ·ℓᵢⱼ` with respect to the similarity matrix.
pub fn contrastive_grad_similarity(
    s: &SimilarityMatrix,
    labels: &[usize],
    margin: f64,
    pair_weights: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_labels(labels, s.n(), "contrastive_grad_similarity")?;
    let n = s.n();
    if pair_weights.dim() != (n, n) {
        return Err(Error::domain(
            "contrastive_grad_similarity: weight matrix shape mismatch",
        ));
    }
    let m = s.matrix();
    let mut grad = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            grad[(i, j)] = if labels[i] == labels[j] {
                -pair_weights[(i, j)]
            } else if m[(i, j)] > margin {
                pair_weights[(i, j)]
            } else {
                0.0
            };
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::test_util::random_unit_rows;
    use ndarray::array;

    #[test]
    fn margin_cases() {
        let s = SimilarityMatrix::from_matrix(array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let pos = contrastive_pair_loss(&s, &[0, 0], 0.5).unwrap();
        assert_eq!(pos[(0, 1)], 0.0);
        let s = SimilarityMatrix::from_matrix(array![[1.0, 0.3], [0.3, 1.0]]).unwrap();
        let neg = contrastive_pair_loss(&s, &[0, 1], 0.5).unwrap();
        assert_eq!(neg[(0, 1)], 0.0);
        assert_eq!(neg[(0, 0)], 0.0);
    }

    #[test]
    fn random_batch_matches_double_loop() {
        let e = random_unit_rows(5, 4, 33);
        let labels = [0, 1, 0, 2, 1];
        let margin = 0.4;
        let s = SimilarityMatrix::from_embeddings(&e).unwrap();
        let loss = contrastive_pair_loss(&s, &labels, margin).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j {
                    0.0
                } else {
                    let sij = s.matrix()[(i, j)];
                    if labels[i] == labels[j] {
                        1.0 - sij
                    } else {
                        (sij - margin).max(0.0)
                    }
                };
                assert!((loss[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let e = random_unit_rows(4, 5, 77);
        let labels = [0, 0, 1, 1];
        let margin = 0.1;
        let weights = Array2::from_elem((4, 4), 0.5);
        let s = SimilarityMatrix::from_embeddings(&e).unwrap();
        let grad_s = contrastive_grad_similarity(&s, &labels, margin, &weights).unwrap();
        let grad_e = crate::losses::similarity_grad_to_embeddings(&e, &grad_s);

        let f = |e: &Array2<f64>| -> f64 {
            let m = e.dot(&e.t());
            let mut total = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    if i == j {
                        continue;
                    }
                    total += 0.5
                        * if labels[i] == labels[j] {
                            1.0 - m[(i, j)]
                        } else {
                            (m[(i, j)] - margin).max(0.0)
                        };
                }
            }
            total
        };
        let h = 1e-6;
        for i in 0..4 {
            for k in 0..5 {
                let mut ep = e.clone();
                let mut em = e.clone();
                ep[(i, k)] += h;
                em[(i, k)] -= h;
                let fd = (f(&ep) - f(&em)) / (2.0 * h);
                assert!(
                    (grad_e[(i, k)] - fd).abs() <= 1e-4 * fd.abs().max(1e-3),
                    "({i},{k})"
                );
            }
        }
    }
}
