//! Proxy-NCA loss: the negative log probability that a softmax
//! nearest-neighbor classifier over class proxies assigns each sample its
//! observed label.

use ndarray::{Array1, Array2};

use super::{check_labels, check_len, validate_unit_rows};
use crate::error::{Error, Result};

/// Per-sample losses with gradients for both sides of the similarity.
#[derive(Clone, Debug)]
pub struct ProxyNcaOutput {
    pub per_sample: Vec<f64>,
    /// `∂(Σᵢ wᵢ·ℓᵢ)/∂embeddings`, one row per sample.
    pub grad_embeddings: Array2<f64>,
    /// `∂(Σᵢ wᵢ·ℓᵢ)/∂proxies`, one row per class.
    pub grad_proxies: Array2<f64>,
}

/// Evaluates `ℓᵢ = −log softmax_{yᵢ}(scale·⟨eᵢ, p_c⟩)` over the class
/// proxies.
///
/// With `include_target` the softmax runs over every class including the
/// target (the stochastic nearest-neighbor reading); without it the
/// denominator excludes the target class as in the original formulation.
pub fn proxy_nca_per_sample(
    embeddings: &Array2<f64>,
    labels: &[usize],
    proxies: &Array2<f64>,
    scale: f64,
    include_target: bool,
    sample_weights: &[f64],
) -> Result<ProxyNcaOutput> {
    let n = embeddings.nrows();
    let class_count = proxies.nrows();
    check_labels(labels, n, "proxy_nca_per_sample")?;
    check_len(sample_weights, n, "proxy_nca_per_sample weights")?;
    if embeddings.ncols() != proxies.ncols() {
        return Err(Error::domain(
            "proxy_nca_per_sample: embedding and proxy dimensions differ",
        ));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Domain(format!(
            "proxy_nca_per_sample: scale must be positive, got {scale}"
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
        return Err(Error::Domain(format!(
            "proxy_nca_per_sample: label {bad} out of range for {class_count} classes"
        )));
    }
    validate_unit_rows(embeddings, "embedding")?;
    validate_unit_rows(proxies, "proxy")?;

    // z = scale · E·Pᵀ, one row of class logits per sample.
    let logits = embeddings.dot(&proxies.t()) * scale;
    let mut per_sample = Vec::with_capacity(n);
    let mut grad_logits = Array2::<f64>::zeros((n, class_count));
    for i in 0..n {
        let y = labels[i];
        let row = logits.row(i);
        if include_target {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Array1<f64> = row.mapv(|z| (z - max).exp());
            let denom = exps.sum();
            per_sample.push(denom.ln() + max - row[y]);
            for c in 0..class_count {
                let q = exps[c] / denom;
                grad_logits[(i, c)] = sample_weights[i] * (q - if c == y { 1.0 } else { 0.0 });
            }
        } else {
            if class_count < 2 {
                return Err(Error::domain(
                    "proxy_nca_per_sample: target-excluded softmax needs at least 2 classes",
                ));
            }
            let max = (0..class_count)
                .filter(|&c| c != y)
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = (0..class_count)
                .filter(|&c| c != y)
                .map(|c| (row[c] - max).exp())
                .sum();
            per_sample.push(denom.ln() + max - row[y]);
            grad_logits[(i, y)] = -sample_weights[i];
            for c in 0..class_count {
                if c == y {
                    continue;
                }
                let q = (row[c] - max).exp() / denom;
                grad_logits[(i, c)] = sample_weights[i] * q;
            }
        }
    }

    // z = scale·E·Pᵀ ⇒ ∂L/∂E = scale·(∂L/∂z)·P and ∂L/∂P = scale·(∂L/∂z)ᵀ·E.
    let grad_embeddings = grad_logits.dot(proxies) * scale;
    let grad_proxies = grad_logits.t().dot(embeddings) * scale;
    Ok(ProxyNcaOutput {
        per_sample,
        grad_embeddings,
        grad_proxies,
    })
}
