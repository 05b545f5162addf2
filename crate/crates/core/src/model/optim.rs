//! Adam with decoupled weight decay, over flat parameter slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay: applied directly to the parameters, not the moments.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// One optimizer instance over a fixed set of parameter tensors, addressed
/// by slot index.
pub struct Adam {
    config: AdamConfig,
    step: u64,
    slots: Vec<Slot>,
}

impl Adam {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Adam {
            config,
            step: 0,
            slots: sizes
                .iter()
                .map(|&s| Slot {
                    m: vec![0.0; s],
                    v: vec![0.0; s],
                })
                .collect(),
        }
    }

    /// Advances the shared timestep; call once per iteration before the
    /// slot updates.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) -> Result<()> {
        let state = self
            .slots
            .get_mut(slot)
            .ok_or_else(|| Error::domain("adam: slot out of range"))?;
        if params.len() != state.m.len() || grads.len() != state.m.len() {
            return Err(Error::domain("adam: parameter size mismatch"));
        }
        let c = &self.config;
        let t = self.step.max(1) as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * *p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_a_quadratic() {
        // Minimize (x - 3)² + (y + 1)².
        let mut adam = Adam::new(AdamConfig::new(0.1, 0.0), &[2]);
        let mut params = vec![0.0, 0.0];
        for _ in 0..500 {
            let grads = vec![2.0 * (params[0] - 3.0), 2.0 * (params[1] + 1.0)];
            adam.begin_step();
            adam.update(0, &mut params, &grads).unwrap();
        }
        assert!((params[0] - 3.0).abs() < 1e-3);
        assert!((params[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        // With zero gradients the update reduces to p ← p·(1 − lr·wd).
        let mut adam = Adam::new(AdamConfig::new(0.01, 0.5), &[1]);
        let mut params = vec![2.0];
        for _ in 0..100 {
            adam.begin_step();
            adam.update(0, &mut params, &[0.0]).unwrap();
        }
        let expected = 2.0 * (1.0 - 0.01 * 0.5f64).powi(100);
        assert!((params[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let mut adam = Adam::new(AdamConfig::new(0.1, 0.0), &[2]);
        assert!(adam.update(0, &mut [0.0, 0.0], &[1.0]).is_err());
        assert!(adam.update(1, &mut [0.0], &[1.0]).is_err());
    }
}
