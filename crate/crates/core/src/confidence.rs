//! Per-sample confidence scores from proxy losses.
//!
//! A batch threshold τ separates presumed-clean from presumed-noisy samples
//! (Otsu by default, with running-average and Gaussian-mixture alternatives),
//! and the confidence map sends each loss to
//! `σ = exp(−W([(ℓ − τ) / 2λ]₊)) ∈ [0, 1]`. Losses at or below the threshold
//! get unit confidence; confidence decays with the excess above it at a rate
//! controlled by λ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{lambert_w0, otsu_threshold, population_variance, LossVector};

/// How the per-batch threshold τ is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStrategy {
    /// Exact two-cluster Otsu threshold of the current batch.
    #[default]
    Otsu,
    /// Running mean over every loss observed so far, including this batch.
    GlobalAverage,
    /// Equal-posterior point of a two-component Gaussian mixture fit to the
    /// current batch by EM.
    Gmm,
}

impl std::fmt::Display for ThresholdStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ThresholdStrategy::Otsu => "otsu",
            ThresholdStrategy::GlobalAverage => "global_average",
            ThresholdStrategy::Gmm => "gmm",
        };
        f.write_str(name)
    }
}

/// Lower clamp applied inside the pair-confidence formula.
///
/// `Zero` constrains confidences to [0, 1]; `MinusTwoOverE` reproduces the
/// unconstrained variant where confidences can reach e.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta0 {
    #[default]
    Zero,
    MinusTwoOverE,
}

impl Beta0 {
    pub fn value(self) -> f64 {
        match self {
            Beta0::Zero => 0.0,
            Beta0::MinusTwoOverE => -2.0 / std::f64::consts::E,
        }
    }
}

/// Parameters of the confidence map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceConfig {
    /// Decay scale λ of the confidence map; larger values treat samples more
    /// equally.
    pub lambda: f64,
    #[serde(default)]
    pub beta0: Beta0,
    #[serde(default)]
    pub strategy: ThresholdStrategy,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        ConfidenceConfig {
            lambda: 0.1,
            beta0: Beta0::Zero,
            strategy: ThresholdStrategy::Otsu,
        }
    }
}

impl ConfidenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!(
                "lambda must be a positive real, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// One fitted mixture component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

/// Mutable state a threshold strategy carries across batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub strategy: ThresholdStrategy,
    pub running_sum: f64,
    pub running_count: u64,
    pub gmm_params: Option<[GmmComponent; 2]>,
}

impl ThresholdState {
    pub fn new(strategy: ThresholdStrategy) -> Self {
        ThresholdState {
            strategy,
            running_sum: 0.0,
            running_count: 0,
            gmm_params: None,
        }
    }
}

/// Threshold for one batch, plus whether a GMM fit had to fall back to Otsu.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdOutcome {
    pub tau: f64,
    pub fell_back_to_otsu: bool,
}

/// Computes the batch threshold under the state's strategy and updates the
/// state.
pub fn compute_threshold(
    losses: &LossVector,
    state: &mut ThresholdState,
) -> Result<ThresholdOutcome> {
    match state.strategy {
        ThresholdStrategy::Otsu => {
            let tau = otsu_threshold(losses)?.threshold;
            Ok(ThresholdOutcome {
                tau,
                fell_back_to_otsu: false,
            })
        }
        ThresholdStrategy::GlobalAverage => {
            state.running_sum += losses.values().iter().sum::<f64>();
            state.running_count += losses.len() as u64;
            Ok(ThresholdOutcome {
                tau: state.running_sum / state.running_count as f64,
                fell_back_to_otsu: false,
            })
        }
        ThresholdStrategy::Gmm => {
            if losses.len() < 4 {
                return Err(Error::Domain(format!(
                    "gmm threshold needs at least 4 values, got {}",
                    losses.len()
                )));
            }
            match fit_gmm2(losses.values()) {
                Some((components, tau)) => {
                    state.gmm_params = Some(components);
                    Ok(ThresholdOutcome {
                        tau,
                        fell_back_to_otsu: false,
                    })
                }
                None => {
                    let tau = otsu_threshold(losses)?.threshold;
                    Ok(ThresholdOutcome {
                        tau,
                        fell_back_to_otsu: true,
                    })
                }
            }
        }
    }
}

/// Confidence of one sample: `exp(−W([(loss − τ) / 2λ]₊))`.
///
/// Exactly 1 for losses at or below the threshold.
pub fn sample_confidence(loss: f64, tau: f64, lambda: f64) -> Result<f64> {
    if !(loss.is_finite() && tau.is_finite()) {
        return Err(Error::domain("sample_confidence: non-finite loss or tau"));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!(
            "sample_confidence: lambda must be positive, got {lambda}"
        )));
    }
    let arg = ((loss - tau) / (2.0 * lambda)).max(0.0);
    Ok((-lambert_w0(arg)?).exp())
}

/// Pair-level confidence baseline: `exp(−W(½·max{β₀, (loss − τ)/λ}))`.
///
/// With β₀ = 0 this coincides with [`sample_confidence`]; with β₀ = −2/e the
/// value can reach e for losses far below the threshold.
pub fn superloss_pair_confidence(loss: f64, tau: f64, lambda: f64, beta0: Beta0) -> Result<f64> {
    if !(loss.is_finite() && tau.is_finite()) {
        return Err(Error::domain(
            "superloss_pair_confidence: non-finite loss or tau",
        ));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!(
            "superloss_pair_confidence: lambda must be positive, got {lambda}"
        )));
    }
    let z = (loss - tau) / lambda;
    let b = beta0.value();
    if z <= b {
        // At the clamp the W argument is the branch point (for β₀ = −2/e) or
        // zero; return the exact limit instead of stressing the evaluator.
        return Ok(match beta0 {
            Beta0::Zero => 1.0,
            Beta0::MinusTwoOverE => std::f64::consts::E,
        });
    }
    Ok((-lambert_w0(0.5 * z)?).exp())
}

/// Confidences for a whole batch, in input order.
#[derive(Clone, Debug)]
pub struct BatchConfidences {
    pub sigma: Vec<f64>,
    pub tau: f64,
    pub fell_back_to_otsu: bool,
}

/// Thresholds the batch and maps every loss to its confidence.
pub fn batch_confidences(
    proxy_losses: &LossVector,
    config: &ConfidenceConfig,
    state: &mut ThresholdState,
) -> Result<BatchConfidences> {
    config.validate()?;
    let outcome = compute_threshold(proxy_losses, state)?;
    let sigma = proxy_losses
        .values()
        .iter()
        .map(|&l| sample_confidence(l, outcome.tau, config.lambda))
        .collect::<Result<Vec<f64>>>()?;
    Ok(BatchConfidences {
        sigma,
        tau: outcome.tau,
        fell_back_to_otsu: outcome.fell_back_to_otsu,
    })
}

/// Fits a two-component 1-D Gaussian mixture by EM and returns the fitted
/// components together with the equal-posterior threshold between the means.
///
/// Initialization: means at the 25th/75th percentiles, both variances at the
/// batch variance, equal weights. At most 100 iterations, convergence at
/// 1e-8 absolute change of mean log-likelihood. Returns `None` when EM does
/// not converge or no posterior crossing exists between the means.
fn fit_gmm2(values: &[f64]) -> Option<([GmmComponent; 2], f64)> {
    const MAX_ITERS: usize = 100;
    const LL_TOL: f64 = 1e-8;
    const VAR_FLOOR: f64 = 1e-12;

    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let percentile = |q: f64| sorted[((q * (n - 1) as f64).round() as usize).min(n - 1)];
    let base_var = population_variance(values).ok()?.max(VAR_FLOOR);

    let mut means = [percentile(0.25), percentile(0.75)];
    let mut vars = [base_var, base_var];
    let mut weights = [0.5, 0.5];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;

    let mut resp = vec![0.0; n]; // responsibility of component 1
    for _ in 0..MAX_ITERS {
        // E step.
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let p0 = weights[0] * gaussian_pdf(x, means[0], vars[0]);
            let p1 = weights[1] * gaussian_pdf(x, means[1], vars[1]);
            let total = p0 + p1;
            if total <= 0.0 || !total.is_finite() {
                return None;
            }
            resp[i] = p1 / total;
            ll += total.ln();
        }
        ll /= n as f64;
        if (ll - prev_ll).abs() < LL_TOL {
            converged = true;
            break;
        }
        prev_ll = ll;

        // M step.
        let r1: f64 = resp.iter().sum();
        let r0 = n as f64 - r1;
        if r0 <= 0.0 || r1 <= 0.0 {
            return None;
        }
        let m0 = values
            .iter()
            .zip(&resp)
            .map(|(&x, &r)| (1.0 - r) * x)
            .sum::<f64>()
            / r0;
        let m1 = values.iter().zip(&resp).map(|(&x, &r)| r * x).sum::<f64>() / r1;
        let v0 = values
            .iter()
            .zip(&resp)
            .map(|(&x, &r)| (1.0 - r) * (x - m0) * (x - m0))
            .sum::<f64>()
            / r0;
        let v1 = values
            .iter()
            .zip(&resp)
            .map(|(&x, &r)| r * (x - m1) * (x - m1))
            .sum::<f64>()
            / r1;
        means = [m0, m1];
        vars = [v0.max(VAR_FLOOR), v1.max(VAR_FLOOR)];
        weights = [r0 / n as f64, r1 / n as f64];
    }
    if !converged {
        return None;
    }

    // Order components by mean and locate the equal-posterior point between
    // them by bisection on the log-density difference.
    let (lo, hi) = if means[0] <= means[1] { (0, 1) } else { (1, 0) };
    let comp = |i: usize| GmmComponent {
        mean: means[i],
        variance: vars[i],
        weight: weights[i],
    };
    let components = [comp(lo), comp(hi)];
    let log_diff = |x: f64| {
        let a = weights[lo].ln() - 0.5 * vars[lo].ln() - (x - means[lo]).powi(2) / (2.0 * vars[lo]);
        let b = weights[hi].ln() - 0.5 * vars[hi].ln() - (x - means[hi]).powi(2) / (2.0 * vars[hi]);
        a - b
    };
    let (mut a, mut b) = (means[lo], means[hi]);
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
        return None;
    }
    let (fa, fb) = (log_diff(a), log_diff(b));
    if !(fa > 0.0 && fb < 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if log_diff(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some((components, 0.5 * (a + b)))
}

fn gaussian_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let norm = (2.0 * std::f64::consts::PI * variance).sqrt();
    (-(x - mean) * (x - mean) / (2.0 * variance)).exp() / norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn losses(v: &[f64]) -> LossVector {
        LossVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn global_average_accumulates() {
        let mut state = ThresholdState::new(ThresholdStrategy::GlobalAverage);
        let out = compute_threshold(&losses(&[1.0, 2.0, 3.0]), &mut state).unwrap();
        assert_eq!(out.tau, 2.0);
        assert_eq!((state.running_sum, state.running_count), (6.0, 3));
        let out = compute_threshold(&losses(&[5.0, 5.0]), &mut state).unwrap();
        assert!((out.tau - 3.2).abs() < 1e-15);
        assert_eq!((state.running_sum, state.running_count), (16.0, 5));
    }

    #[test]
    fn otsu_strategy_matches_numerics() {
        let mut state = ThresholdState::new(ThresholdStrategy::Otsu);
        let out = compute_threshold(&losses(&[1.0, 2.0, 10.0, 11.0]), &mut state).unwrap();
        assert_eq!(out.tau, 6.0);
        assert!(!out.fell_back_to_otsu);
    }

    #[test]
    fn sample_confidence_examples() {
        // Positive part inactive.
        assert_eq!(sample_confidence(0.5, 1.0, 3.7).unwrap(), 1.0);
        // loss − tau = 2λ ⇒ exp(−W(1)) = Ω.
        let sigma = sample_confidence(3.0, 1.0, 1.0).unwrap();
        assert!((sigma - 0.5671432904).abs() < 1e-9);
        // loss − tau = 2eλ ⇒ exp(−W(e)) = 1/e.
        let sigma = sample_confidence(2.0 * std::f64::consts::E, 0.0, 1.0).unwrap();
        assert!((sigma - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn superloss_examples() {
        for beta0 in [Beta0::Zero, Beta0::MinusTwoOverE] {
            assert_eq!(superloss_pair_confidence(2.0, 2.0, 0.7, beta0).unwrap(), 1.0);
        }
        // Deep below the threshold the unconstrained variant saturates at e.
        let sigma = superloss_pair_confidence(0.0, 10.0, 1.0, Beta0::MinusTwoOverE).unwrap();
        assert!((sigma - std::f64::consts::E).abs() < 1e-12);
        // (loss − tau)/λ = 2 with β₀ = 0 matches the sample confidence at the
        // same argument.
        let sigma = superloss_pair_confidence(3.0, 1.0, 1.0, Beta0::Zero).unwrap();
        assert!((sigma - 0.5671432904).abs() < 1e-9);
    }

    #[test]
    fn superloss_with_beta0_zero_equals_sample_confidence() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 3.0).unwrap();
        for _ in 0..500 {
            let loss: f64 = normal.sample(&mut rng);
            let tau: f64 = normal.sample(&mut rng);
            let lambda: f64 = 0.01 + normal.sample(&mut rng).abs();
            let a = superloss_pair_confidence(loss, tau, lambda, Beta0::Zero).unwrap();
            let b = sample_confidence(loss, tau, lambda).unwrap();
            assert!((a - b).abs() <= 1e-15 * a.max(1.0));
        }
    }

    #[test]
    fn batch_confidences_compose() {
        let cfg = ConfidenceConfig {
            lambda: 1.0,
            ..ConfidenceConfig::default()
        };
        let mut state = ThresholdState::new(cfg.strategy);
        let out = batch_confidences(&losses(&[1.0, 2.0, 10.0, 11.0]), &cfg, &mut state).unwrap();
        assert_eq!(out.tau, 6.0);
        assert_eq!(out.sigma[0], 1.0);
        assert_eq!(out.sigma[1], 1.0);
        let w2 = lambert_w0(2.0).unwrap();
        let w25 = lambert_w0(2.5).unwrap();
        assert!((out.sigma[2] - (-w2).exp()).abs() < 1e-12);
        assert!((out.sigma[3] - (-w25).exp()).abs() < 1e-12);
    }

    #[test]
    fn lambda_limits() {
        let cfg_small = ConfidenceConfig {
            lambda: 1e-9,
            ..ConfidenceConfig::default()
        };
        let cfg_large = ConfidenceConfig {
            lambda: 1e9,
            ..ConfidenceConfig::default()
        };
        let batch = losses(&[0.5, 0.8, 7.5, 8.0]);
        let mut state = ThresholdState::new(ThresholdStrategy::Otsu);
        let small = batch_confidences(&batch, &cfg_small, &mut state).unwrap();
        for (l, s) in batch.values().iter().zip(&small.sigma) {
            if *l < small.tau {
                assert!(*s > 1.0 - 1e-6);
            } else {
                assert!(*s < 1e-6);
            }
        }
        let large = batch_confidences(&batch, &cfg_large, &mut state).unwrap();
        assert!(large.sigma.iter().all(|s| *s > 0.999999));
    }

    #[test]
    fn gmm_threshold_separates_planted_mixture() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let low = Normal::new(0.0, 0.1).unwrap();
        let high = Normal::new(10.0, 0.1).unwrap();
        let mut values: Vec<f64> = (0..500).map(|_| low.sample(&mut rng)).collect();
        values.extend((0..500).map(|_| high.sample(&mut rng)));
        let mut state = ThresholdState::new(ThresholdStrategy::Gmm);
        let out = compute_threshold(&LossVector::new(values).unwrap(), &mut state).unwrap();
        assert!(!out.fell_back_to_otsu);
        assert!(out.tau > 1.0 && out.tau < 9.0, "tau={}", out.tau);
        let params = state.gmm_params.unwrap();
        assert!((params[0].weight + params[1].weight - 1.0).abs() < 1e-9);
        assert!(params[0].mean < params[1].mean);
    }

    #[test]
    fn gmm_falls_back_on_degenerate_batches() {
        // Constant batch: no posterior crossing between equal means.
        let mut state = ThresholdState::new(ThresholdStrategy::Gmm);
        let out = compute_threshold(&losses(&[3.0, 3.0, 3.0, 3.0]), &mut state).unwrap();
        assert!(out.fell_back_to_otsu);
        assert_eq!(out.tau, 3.0);
    }

    proptest! {
        // Shifting every loss by a constant leaves every
        // confidence unchanged under the per-batch Otsu threshold.
        #[test]
        fn confidence_translation_invariant(
            values in proptest::collection::vec(0.0f64..20.0, 4..32),
            c in -1000.0f64..1000.0,
            lambda in 0.01f64..100.0,
        ) {
            let cfg = ConfidenceConfig { lambda, ..ConfidenceConfig::default() };
            let mut s0 = ThresholdState::new(ThresholdStrategy::Otsu);
            let mut s1 = ThresholdState::new(ThresholdStrategy::Otsu);
            let base = batch_confidences(&losses(&values), &cfg, &mut s0).unwrap();
            let shifted_values: Vec<f64> = values.iter().map(|v| v + c).collect();
            let shifted = batch_confidences(&losses(&shifted_values), &cfg, &mut s1).unwrap();
            for (a, b) in base.sigma.iter().zip(&shifted.sigma) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        // Order anti-monotonicity and range.
        #[test]
        fn confidence_ordering_and_range(
            values in proptest::collection::vec(-5.0f64..25.0, 4..32),
            lambda in 0.01f64..100.0,
        ) {
            let cfg = ConfidenceConfig { lambda, ..ConfidenceConfig::default() };
            let mut state = ThresholdState::new(ThresholdStrategy::Otsu);
            let out = batch_confidences(&losses(&values), &cfg, &mut state).unwrap();
            for (i, (&li, &si)) in values.iter().zip(&out.sigma).enumerate() {
                prop_assert!((0.0..=1.0).contains(&si));
                for (&lj, &sj) in values.iter().zip(&out.sigma).skip(i + 1) {
                    if li <= lj {
                        prop_assert!(si >= sj);
                    }
                    if li == lj {
                        prop_assert!(si == sj);
                    }
                }
            }
        }
    }
}
