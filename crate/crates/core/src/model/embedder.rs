//! Trainable embedder: a small MLP whose output rows are normalized onto the
//! unit hypersphere.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the embedder. `hidden_dim = 0` drops the hidden layer and
/// leaves a single linear projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
}

/// MLP `input → [hidden, ReLU] → embedding`, followed by row normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedder {
    config: EmbedderConfig,
    /// Hidden layer, absent when `hidden_dim == 0`.
    pub(crate) hidden: Option<(Array2<f64>, Array1<f64>)>,
    pub(crate) out_weight: Array2<f64>,
    pub(crate) out_bias: Array1<f64>,
}

/// Forward activations kept for the backward pass.
pub struct ForwardCache {
    input: Array2<f64>,
    hidden_pre: Option<Array2<f64>>,
    hidden_act: Option<Array2<f64>>,
    raw_out: Array2<f64>,
    norms: Vec<f64>,
    /// Unit-norm embedding rows.
    pub embeddings: Array2<f64>,
}

/// Gradients for every trainable tensor of the embedder.
pub struct EmbedderGrads {
    pub hidden_weight: Option<Array2<f64>>,
    pub hidden_bias: Option<Array1<f64>>,
    pub out_weight: Array2<f64>,
    pub out_bias: Array1<f64>,
}

impl Embedder {
    /// Seeded Gaussian initialization (He-scaled for the ReLU layer).
    pub fn init(config: EmbedderConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.input_dim == 0 || config.embedding_dim == 0 {
            return Err(Error::config("embedder dimensions must be positive"));
        }
        let mut sample_matrix = |rows: usize, cols: usize, std: f64| -> Array2<f64> {
            let dist = Normal::new(0.0, std).expect("positive std");
            Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
        };
        let (hidden, out_in) = if config.hidden_dim > 0 {
            let std = (2.0 / config.input_dim as f64).sqrt();
            let w = sample_matrix(config.input_dim, config.hidden_dim, std);
            (
                Some((w, Array1::zeros(config.hidden_dim))),
                config.hidden_dim,
            )
        } else {
            (None, config.input_dim)
        };
        let out_weight = sample_matrix(out_in, config.embedding_dim, (1.0 / out_in as f64).sqrt());
        Ok(Embedder {
            config,
            hidden,
            out_weight,
            out_bias: Array1::zeros(config.embedding_dim),
        })
    }

    /// Builds an embedder from explicit parameters.
    pub fn from_parts(
        config: EmbedderConfig,
        hidden: Option<(Array2<f64>, Array1<f64>)>,
        out_weight: Array2<f64>,
        out_bias: Array1<f64>,
    ) -> Result<Self> {
        let expected_in = if config.hidden_dim > 0 {
            match &hidden {
                Some((w, b)) => {
                    if w.dim() != (config.input_dim, config.hidden_dim)
                        || b.len() != config.hidden_dim
                    {
                        return Err(Error::config("hidden layer shape mismatch"));
                    }
                }
                None => return Err(Error::config("hidden layer parameters missing")),
            }
            config.hidden_dim
        } else {
            if hidden.is_some() {
                return Err(Error::config("unexpected hidden layer parameters"));
            }
            config.input_dim
        };
        if out_weight.dim() != (expected_in, config.embedding_dim)
            || out_bias.len() != config.embedding_dim
        {
            return Err(Error::config("output layer shape mismatch"));
        }
        Ok(Embedder {
            config,
            hidden,
            out_weight,
            out_bias,
        })
    }

    pub fn config(&self) -> EmbedderConfig {
        self.config
    }

    /// Forward pass with cached activations.
    pub fn forward(&self, features: &Array2<f64>) -> Result<ForwardCache> {
        if features.ncols() != self.config.input_dim {
            return Err(Error::Domain(format!(
                "embedder expects {} input features, got {}",
                self.config.input_dim,
                features.ncols()
            )));
        }
        let (hidden_pre, hidden_act) = match &self.hidden {
            Some((w, b)) => {
                let pre = features.dot(w) + b;
                let act = pre.mapv(|v| v.max(0.0));
                (Some(pre), Some(act))
            }
            None => (None, None),
        };
        let last = hidden_act.as_ref().unwrap_or(features);
        let raw_out = last.dot(&self.out_weight) + &self.out_bias;
        let mut embeddings = raw_out.clone();
        let mut norms = Vec::with_capacity(raw_out.nrows());
        for mut row in embeddings.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm < 1e-12 {
                return Err(Error::domain(
                    "embedder produced a zero-norm output row",
                ));
            }
            row.mapv_inplace(|v| v / norm);
            norms.push(norm);
        }
        Ok(ForwardCache {
            input: features.clone(),
            hidden_pre,
            hidden_act,
            raw_out,
            norms,
            embeddings,
        })
    }

    /// Unit-norm embeddings without the cache.
    pub fn embed(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(features)?.embeddings)
    }

    /// Backpropagates a gradient on the normalized embeddings through the
    /// normalization and both linear layers.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_embeddings: &Array2<f64>,
    ) -> Result<EmbedderGrads> {
        let n = cache.embeddings.nrows();
        if grad_embeddings.dim() != cache.embeddings.dim() {
            return Err(Error::domain("backward: gradient shape mismatch"));
        }
        // Through y = z/‖z‖: dz = (g − y·(y∙g)) / ‖z‖.
        let mut grad_raw = Array2::<f64>::zeros(cache.raw_out.dim());
        for i in 0..n {
            let y = cache.embeddings.row(i);
            let g = grad_embeddings.row(i);
            let dot = y.dot(&g);
            let mut row = grad_raw.row_mut(i);
            for k in 0..y.len() {
                row[k] = (g[k] - y[k] * dot) / cache.norms[i];
            }
        }
        let last = cache.hidden_act.as_ref().unwrap_or(&cache.input);
        let grad_out_weight = last.t().dot(&grad_raw);
        let grad_out_bias = grad_raw.sum_axis(Axis(0));
        let (grad_hidden_weight, grad_hidden_bias) = match (&self.hidden, &cache.hidden_pre) {
            (Some((w, _)), Some(pre)) => {
                let mut grad_hidden = grad_raw.dot(&self.out_weight.t());
                grad_hidden.zip_mut_with(pre, |g, &p| {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                });
                let gw = cache.input.t().dot(&grad_hidden);
                let gb = grad_hidden.sum_axis(Axis(0));
                debug_assert_eq!(gw.dim(), w.dim());
                (Some(gw), Some(gb))
            }
            _ => (None, None),
        };
        Ok(EmbedderGrads {
            hidden_weight: grad_hidden_weight,
            hidden_bias: grad_hidden_bias,
            out_weight: grad_out_weight,
            out_bias: grad_out_bias,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn toy_embedder(seed: u64) -> Embedder {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Embedder::init(
            EmbedderConfig {
                input_dim: 4,
                hidden_dim: 6,
                embedding_dim: 3,
            },
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn output_rows_are_unit_norm() {
        let e = toy_embedder(1);
        let x = array![[0.3, -1.2, 0.7, 2.0], [1.0, 1.0, -1.0, 0.1]];
        let out = e.embed(&x).unwrap();
        for row in out.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_projection_preserves_unit_vectors() {
        let config = EmbedderConfig {
            input_dim: 3,
            hidden_dim: 0,
            embedding_dim: 3,
        };
        let e = Embedder::from_parts(config, None, Array2::eye(3), Array1::zeros(3)).unwrap();
        let v = array![[0.6, 0.8, 0.0]];
        let out = e.embed(&v).unwrap();
        for k in 0..3 {
            assert!((out[(0, k)] - v[(0, k)]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let a = toy_embedder(7);
        let b = toy_embedder(7);
        assert_eq!(a, b);
        let x = array![[0.5, 0.1, -0.4, 0.9]];
        assert_eq!(a.embed(&x).unwrap(), b.embed(&x).unwrap());
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let e = toy_embedder(2);
        let x = array![[1.0, 2.0]];
        assert!(e.embed(&x).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Scalar probe L = Σ c_ik · E_ik with fixed random coefficients.
        let e = toy_embedder(3);
        let x = array![
            [0.3, -1.2, 0.7, 2.0],
            [1.0, 1.0, -1.0, 0.1],
            [-0.2, 0.4, 0.9, -1.5]
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let coeff =
            Array2::from_shape_fn((3, 3), |_| rand_distr::StandardNormal.sample(&mut rng));

        let loss = |emb: &Embedder| -> f64 {
            let out = emb.embed(&x).unwrap();
            (&out * &coeff).sum()
        };
        let cache = e.forward(&x).unwrap();
        let grads = e.backward(&cache, &coeff).unwrap();

        let h = 1e-6;
        // Check a spread of parameters in each tensor.
        for &(r, c) in &[(0usize, 0usize), (1, 3), (3, 5)] {
            let mut plus = e.clone();
            let mut minus = e.clone();
            plus.hidden.as_mut().unwrap().0[(r, c)] += h;
            minus.hidden.as_mut().unwrap().0[(r, c)] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let g = grads.hidden_weight.as_ref().unwrap()[(r, c)];
            assert!((g - fd).abs() <= 1e-5 * fd.abs().max(1e-2), "w1 ({r},{c}): {g} vs {fd}");
        }
        for &i in &[0usize, 2, 5] {
            let mut plus = e.clone();
            let mut minus = e.clone();
            plus.hidden.as_mut().unwrap().1[i] += h;
            minus.hidden.as_mut().unwrap().1[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let g = grads.hidden_bias.as_ref().unwrap()[i];
            assert!((g - fd).abs() <= 1e-5 * fd.abs().max(1e-2), "b1 {i}: {g} vs {fd}");
        }
        for &(r, c) in &[(0usize, 0usize), (4, 2), (5, 1)] {
            let mut plus = e.clone();
            let mut minus = e.clone();
            plus.out_weight[(r, c)] += h;
            minus.out_weight[(r, c)] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let g = grads.out_weight[(r, c)];
            assert!((g - fd).abs() <= 1e-5 * fd.abs().max(1e-2), "w2 ({r},{c}): {g} vs {fd}");
        }
        for &i in &[0usize, 1, 2] {
            let mut plus = e.clone();
            let mut minus = e.clone();
            plus.out_bias[i] += h;
            minus.out_bias[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let g = grads.out_bias[i];
            assert!((g - fd).abs() <= 1e-5 * fd.abs().max(1e-2), "b2 {i}: {g} vs {fd}");
        }
    }
}
