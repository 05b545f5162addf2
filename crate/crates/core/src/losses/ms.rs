//! Multi-similarity loss, evaluated per sample without pair mining.

use ndarray::Array2;

use super::{check_labels, check_len, LossConfig, SimilarityMatrix};
use crate::error::Result;

/// Per-sample multi-similarity loss:
///
/// `ℓᵢ = (1/α)·ln(1 + Σ_{j∈𝒫ᵢ} e^{−α(Sᵢⱼ−δ)}) + (1/β)·ln(1 + Σ_{j∈𝒩ᵢ} e^{−β(δ−Sᵢⱼ)})`
///
/// with positives 𝒫ᵢ = same label, self excluded, and negatives 𝒩ᵢ = all
/// other labels. Empty sets contribute nothing.
pub fn ms_loss_per_sample(
    s: &SimilarityMatrix,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    check_labels(labels, s.n(), "ms_loss_per_sample")?;
    cfg.validate()?;
    let m = s.matrix();
    let n = s.n();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut pos_sum = 0.0;
        let mut neg_sum = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let sij = m[(i, j)];
            if labels[j] == labels[i] {
                pos_sum += (-cfg.alpha * (sij - cfg.delta)).exp();
            } else {
                neg_sum += (-cfg.beta * (cfg.delta - sij)).exp();
            }
        }
        out.push((1.0 + pos_sum).ln() / cfg.alpha + (1.0 + neg_sum).ln() / cfg.beta);
    }
    Ok(out)
}

/// Gradient of `Σᵢ wᵢ·ℓᵢ` with respect to the similarity matrix.
///
/// Row i carries sample i's contribution; the diagonal is zero. Chain through
/// [`super::similarity_grad_to_embeddings`] for embedding gradients.
pub fn ms_loss_grad_similarity(
    s: &SimilarityMatrix,
    labels: &[usize],
    cfg: &LossConfig,
    sample_weights: &[f64],
) -> Result<Array2<f64>> {
    check_labels(labels, s.n(), "ms_loss_grad_similarity")?;
    check_len(sample_weights, s.n(), "ms_loss_grad_similarity weights")?;
    cfg.validate()?;
    let m = s.matrix();
    let n = s.n();
    let mut grad = Array2::zeros((n, n));
    for i in 0..n {
        let mut pos_terms = Vec::new();
        let mut neg_terms = Vec::new();
        for j in 0..n {
            if j == i {
                continue;
            }
            let sij = m[(i, j)];
            if labels[j] == labels[i] {
                pos_terms.push((j, (-cfg.alpha * (sij - cfg.delta)).exp()));
            } else {
                neg_terms.push((j, (-cfg.beta * (cfg.delta - sij)).exp()));
            }
        }
        let pos_den = 1.0 + pos_terms.iter().map(|(_, e)| e).sum::<f64>();
        let neg_den = 1.0 + neg_terms.iter().map(|(_, e)| e).sum::<f64>();
        for (j, e) in pos_terms {
            grad[(i, j)] = -sample_weights[i] * e / pos_den;
        }
        for (j, e) in neg_terms {
            grad[(i, j)] = sample_weights[i] * e / neg_den;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::test_util::random_unit_rows;
    use crate::losses::similarity_grad_to_embeddings;
    use ndarray::array;

    fn cfg() -> LossConfig {
        LossConfig {
            alpha: 2.0,
            beta: 40.0,
            delta: 0.1,
            ..LossConfig::default()
        }
    }

    #[test]
    fn single_positive_at_margin() {
        // One positive pair at S = δ: the exponent vanishes and the loss is
        // ln(2)/α.
        let s = SimilarityMatrix::from_matrix(array![[1.0, 0.1], [0.1, 1.0]]).unwrap();
        let l = ms_loss_per_sample(&s, &[0, 0], &cfg()).unwrap();
        assert!((l[0] - 2.0f64.ln() / 2.0).abs() < 1e-12);
        assert!((l[0] - 0.3465736).abs() < 1e-6);
    }

    #[test]
    fn single_negative_at_margin() {
        let s = SimilarityMatrix::from_matrix(array![[1.0, 0.1], [0.1, 1.0]]).unwrap();
        let l = ms_loss_per_sample(&s, &[0, 1], &cfg()).unwrap();
        assert!((l[0] - 2.0f64.ln() / 40.0).abs() < 1e-12);
        assert!((l[0] - 0.0173287).abs() < 1e-6);
    }

    #[test]
    fn random_batch_matches_direct_evaluation() {
        let e = random_unit_rows(6, 8, 42);
        let labels = [0, 0, 1, 1, 2, 2];
        let s = SimilarityMatrix::from_embeddings(&e).unwrap();
        let l = ms_loss_per_sample(&s, &labels, &cfg()).unwrap();
        // Independent scripted evaluation straight from the formula.
        for i in 0..6 {
            let mut pos = 0.0;
            let mut neg = 0.0;
            for j in 0..6 {
                if i == j {
                    continue;
                }
                let sij: f64 = (0..8).map(|k| e[(i, k)] * e[(j, k)]).sum();
                if labels[i] == labels[j] {
                    pos += (-2.0 * (sij - 0.1)).exp();
                } else {
                    neg += (-40.0 * (0.1 - sij)).exp();
                }
            }
            let expected = (1.0 + pos).ln() / 2.0 + (1.0 + neg).ln() / 40.0;
            assert!((l[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariant() {
        let e = random_unit_rows(5, 6, 9);
        let labels = [0, 1, 0, 2, 1];
        let s = SimilarityMatrix::from_embeddings(&e).unwrap();
        let base = ms_loss_per_sample(&s, &labels, &cfg()).unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let mut pe = Array2::zeros((5, 6));
        let mut plabels = [0usize; 5];
        for (new_i, &old_i) in perm.iter().enumerate() {
            pe.row_mut(new_i).assign(&e.row(old_i));
            plabels[new_i] = labels[old_i];
        }
        let ps = SimilarityMatrix::from_embeddings(&pe).unwrap();
        let permuted = ms_loss_per_sample(&ps, &plabels, &cfg()).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            assert!((permuted[new_i] - base[old_i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let e = random_unit_rows(5, 7, 17);
        let labels = [0, 0, 1, 1, 1];
        let weights = [0.3, 1.0, 0.5, 0.9, 0.2];
        let c = cfg();
        let s = SimilarityMatrix::from_embeddings(&e).unwrap();
        let grad_s = ms_loss_grad_similarity(&s, &labels, &c, &weights).unwrap();
        let grad_e = similarity_grad_to_embeddings(&e, &grad_s);

        let f = |e: &Array2<f64>| -> f64 {
            let m = e.dot(&e.t());
            let mut total = 0.0;
            for i in 0..5 {
                let mut pos = 0.0;
                let mut neg = 0.0;
                for j in 0..5 {
                    if i == j {
                        continue;
                    }
                    if labels[i] == labels[j] {
                        pos += (-c.alpha * (m[(i, j)] - c.delta)).exp();
                    } else {
                        neg += (-c.beta * (c.delta - m[(i, j)])).exp();
                    }
                }
                total +=
                    weights[i] * ((1.0 + pos).ln() / c.alpha + (1.0 + neg).ln() / c.beta);
            }
            total
        };
        let h = 1e-5;
        for i in 0..5 {
            for k in 0..7 {
                let mut ep = e.clone();
                let mut em = e.clone();
                ep[(i, k)] += h;
                em[(i, k)] -= h;
                let fd = (f(&ep) - f(&em)) / (2.0 * h);
                let g = grad_e[(i, k)];
                assert!(
                    (g - fd).abs() <= 1e-4 * fd.abs().max(1e-3),
                    "({i},{k}): analytic {g} vs fd {fd}"
                );
            }
        }
    }
}
