//! Scalar special functions and 1-D statistics used by the confidence
//! machinery: the principal branch of the Lambert W function, population
//! variance, and an exact two-cluster Otsu threshold over sample midpoints.

use crate::error::{Error, Result};

/// −1/e, the branch point of the Lambert W function.
pub const NEG_INV_E: f64 = -0.36787944117144233;

/// A batch of per-sample loss values.
///
/// Construction validates that every value is finite and that the batch is
/// non-empty; operations with stronger length requirements check them
/// themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct LossVector {
    values: Vec<f64>,
}

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("loss vector must contain at least one value"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite loss value {v}")));
        }
        Ok(LossVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Outcome of the exact Otsu threshold search.
///
/// `low_cluster` and `high_cluster` index into the *sorted* loss sequence, so
/// the result is a function of the multiset of values alone and identical for
/// any permutation of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct OtsuResult {
    /// The selected threshold τ.
    pub threshold: f64,
    /// All candidate thresholds (midpoints of consecutive sorted values at
    /// positions that leave at least two items on each side).
    pub candidate_thresholds: Vec<f64>,
    /// Sorted-order indices with value < τ.
    pub low_cluster: Vec<usize>,
    /// Sorted-order indices with value ≥ τ.
    pub high_cluster: Vec<usize>,
    /// (|C₀|·Var[C₀] + |C₁|·Var[C₁]) / n at the selected threshold.
    pub cost: f64,
}

/// Principal branch of the Lambert W function, the inverse of `w ↦ w·eʷ`.
///
/// Accurate to ~1e-12 relative residual on `[0, 1e6]`; best-effort on the
/// negative part of the domain `[−1/e, 0)` where the branch point limits
/// attainable precision. Inputs below −1/e are a domain error.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("lambert_w0: non-finite input {x}")));
    }
    // Tolerate arguments a few ulps below the branch point: callers compute
    // −1/e through different roundings.
    if x < NEG_INV_E {
        if x < NEG_INV_E - 1e-14 {
            return Err(Error::Domain(format!(
                "lambert_w0: input {x} below branch point -1/e"
            )));
        }
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let mut w = initial_guess(x);
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-9 {
            // Halley's denominator degenerates at the branch point; the
            // series guess is already as good as f64 allows there.
            break;
        }
        // Halley step for f(w) = w·eʷ − x.
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-15 {
            break;
        }
    }
    Ok(w.max(-1.0))
}

fn initial_guess(x: f64) -> f64 {
    if x > std::f64::consts::E {
        // Asymptotic expansion: W(x) ≈ L1 − L2 + L2/L1.
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    } else if x < -0.25 {
        // Series around the branch point.
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x.abs() < 0.05 {
        // Taylor series near 0.
        x * (1.0 - x + 1.5 * x * x)
    } else {
        (1.0 + x).ln()
    }
}

/// Mean squared deviation from the mean, dividing by the count.
pub fn population_variance(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("population_variance: empty input"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "population_variance: non-finite value {v}"
        )));
    }
    // Welford's online recurrence.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok(m2 / values.len() as f64)
}

/// Exact two-cluster Otsu threshold over the midpoints of consecutive sorted
/// loss values.
///
/// Candidate thresholds are the midpoints that leave at least two samples on
/// each side; the winner minimizes the size-weighted within-cluster variance
/// `(|C₀|·Var[C₀] + |C₁|·Var[C₁]) / n` with C₀ = {ℓ < τ}, C₁ = {ℓ ≥ τ}.
/// Cost ties resolve to the smallest threshold.
pub fn otsu_threshold(losses: &LossVector) -> Result<OtsuResult> {
    let n = losses.len();
    if n < 4 {
        return Err(Error::Domain(format!(
            "otsu_threshold: needs at least 4 values, got {n}"
        )));
    }
    let mut sorted = losses.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite by construction"));

    // Work on centred values so the cost computation cancels translations;
    // thresholds are still reported on the raw scale.
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = sorted.iter().map(|v| v - mean).collect();
    let mut prefix_sum = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (i, &v) in centred.iter().enumerate() {
        prefix_sum[i + 1] = prefix_sum[i] + v;
        prefix_sq[i + 1] = prefix_sq[i] + v * v;
    }
    // Within-cluster sum of squares of sorted[a..b].
    let sse = |a: usize, b: usize| -> f64 {
        let count = b - a;
        if count == 0 {
            return 0.0;
        }
        let s = prefix_sum[b] - prefix_sum[a];
        let sq = prefix_sq[b] - prefix_sq[a];
        (sq - s * s / count as f64).max(0.0)
    };

    let mut candidates = Vec::with_capacity(n - 3);
    let mut best: Option<(f64, f64, usize)> = None; // (cost, tau, below_count)
    for i in 1..=(n - 3) {
        let tau = 0.5 * (sorted[i] + sorted[i + 1]);
        candidates.push(tau);
        // With ties the value-based partition can deviate from the positional
        // split, so count by comparison.
        let below = sorted.partition_point(|&v| v < tau);
        let cost = (sse(0, below) + sse(below, n)) / n as f64;
        match best {
            Some((best_cost, _, _)) if cost >= best_cost => {}
            _ => best = Some((cost, tau, below)),
        }
    }
    let (cost, threshold, below) = best.expect("n >= 4 yields at least one candidate");
    Ok(OtsuResult {
        threshold,
        candidate_thresholds: candidates,
        low_cluster: (0..below).collect(),
        high_cluster: (below..n).collect(),
        cost,
    })
}
