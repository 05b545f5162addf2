//! Differentiable loss kernels over batches of unit-norm embeddings.
//!
//! All kernels report per-sample losses and expose analytic gradients.
//! Gradients with respect to embeddings are assembled in two steps: each
//! kernel produces `∂L/∂S` for the cosine-similarity Gram matrix `S = E·Eᵀ`,
//! and [`similarity_grad_to_embeddings`] chains that back to the embedding
//! rows. Per-sample weights (confidences, batch averaging, the regularizer
//! weight) enter the gradient as constants.

mod contrastive;
mod ms;
mod objective;
mod proxy;
mod semantic;

pub use contrastive::{contrastive_grad_similarity, contrastive_pair_loss};
pub use ms::{ms_loss_grad_similarity, ms_loss_per_sample};
pub use objective::procsim_objective;
pub use proxy::{proxy_nca_per_sample, ProxyNcaOutput};
pub use semantic::{
    semantic_regularizer_grad_similarity, semantic_regularizer_per_sample, SemanticMatrixSet,
    SemanticTable, TopkAssignments,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const UNIT_NORM_TOL: f64 = 1e-6;

/// Hyperparameters shared by the loss kernels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Positive-pair sharpness of the multi-similarity loss.
    pub alpha: f64,
    /// Negative-pair sharpness of the multi-similarity loss.
    pub beta: f64,
    /// Similarity margin of the multi-similarity loss.
    pub delta: f64,
    /// Weight of the semantic regularizer in the combined objective.
    pub omega: f64,
    /// Inverse softmax temperature of the proxy loss.
    pub proxy_scale: f64,
    /// Number of language matrices in the semantic regularizer.
    pub top_k: usize,
    /// Margin of the contrastive baseline.
    pub contrastive_margin: f64,
    /// Whether the proxy softmax denominator includes the target class.
    pub include_target_in_denominator: bool,
    /// Softmax temperature of the semantic regularizer.
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 2.0,
            beta: 40.0,
            delta: 0.1,
            omega: 10.0,
            proxy_scale: 1.0 / 0.11,
            top_k: 1,
            contrastive_margin: 0.5,
            include_target_in_denominator: true,
            temperature: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("proxy_scale", self.proxy_scale),
            ("temperature", self.temperature),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.delta.is_finite() {
            return Err(Error::config("delta must be finite"));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::Config(format!(
                "omega must be nonnegative, got {}",
                self.omega
            )));
        }
        if !(self.contrastive_margin.is_finite() && self.contrastive_margin >= 0.0) {
            return Err(Error::config("contrastive_margin must be nonnegative"));
        }
        if self.top_k == 0 {
            return Err(Error::config("top_k must be at least 1"));
        }
        Ok(())
    }
}

/// Symmetric Gram matrix of cosine similarities between batch embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    entries: Array2<f64>,
}

impl SimilarityMatrix {
    /// Builds `S = E·Eᵀ` from unit-norm embedding rows.
    ///
    /// Rows further than 1e-6 from unit norm are rejected. The diagonal is
    /// pinned to exactly 1 and entries are clamped into [−1, 1] to absorb
    /// rounding.
    pub fn from_embeddings(embeddings: &Array2<f64>) -> Result<Self> {
        validate_unit_rows(embeddings, "embedding")?;
        let mut entries = embeddings.dot(&embeddings.t());
        entries.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        for i in 0..entries.nrows() {
            entries[(i, i)] = 1.0;
        }
        Ok(SimilarityMatrix { entries })
    }

    /// Wraps an explicit similarity matrix, checking symmetry, range, and a
    /// unit diagonal.
    pub fn from_matrix(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::domain("similarity matrix must be square"));
        }
        for i in 0..entries.nrows() {
            if (entries[(i, i)] - 1.0).abs() > 1e-9 {
                return Err(Error::domain("similarity diagonal must be 1"));
            }
            for j in 0..entries.ncols() {
                let v = entries[(i, j)];
                if !v.is_finite() || !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&v) {
                    return Err(Error::domain("similarity entries must lie in [-1, 1]"));
                }
                if (v - entries[(j, i)]).abs() > 1e-9 {
                    return Err(Error::domain("similarity matrix must be symmetric"));
                }
            }
        }
        Ok(SimilarityMatrix { entries })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }
}

pub(crate) fn validate_unit_rows(m: &Array2<f64>, what: &str) -> Result<()> {
    for (i, row) in m.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Domain(format!(
                "{what} row {i} is not unit-norm (|row| = {norm})"
            )));
        }
    }
    Ok(())
}

/// Chains a gradient on the Gram matrix back to the embeddings:
/// for `S = E·Eᵀ` and `G = ∂L/∂S`, returns `∂L/∂E = (G + Gᵀ)·E`.
pub fn similarity_grad_to_embeddings(
    embeddings: &Array2<f64>,
    grad_similarity: &Array2<f64>,
) -> Array2<f64> {
    let symmetrized = grad_similarity + &grad_similarity.t();
    symmetrized.dot(embeddings)
}

pub(crate) fn check_labels(labels: &[usize], n: usize, what: &str) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Domain(format!(
            "{what}: expected {n} labels, got {}",
            labels.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_len(values: &[f64], n: usize, what: &str) -> Result<()> {
    if values.len() != n {
        return Err(Error::Domain(format!(
            "{what}: expected length {n}, got {}",
            values.len()
        )));
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_rows_give_all_ones() {
        let e = array![[0.6, 0.8], [0.6, 0.8], [0.6, 0.8]];
        let s = SimilarityMatrix::from_embeddings(&e).unwrap();
        for v in s.matrix().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_rows_give_identity() {
        let e = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let s = SimilarityMatrix::from_embeddings(&e).unwrap();
        assert_eq!(s.matrix(), &Array2::<f64>::eye(3));
    }

    #[test]
    fn random_matrix_matches_double_loop() {
        let e = test_util::random_unit_rows(4, 8, 3);
        let s = SimilarityMatrix::from_embeddings(&e).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..8).map(|k| e[(i, k)] * e[(j, k)]).sum();
                let expected = if i == j { 1.0 } else { dot };
                assert!((s.matrix()[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_normalized_rows() {
        let e = array![[1.0, 1.0], [0.0, 1.0]];
        assert!(SimilarityMatrix::from_embeddings(&e).is_err());
    }
}
