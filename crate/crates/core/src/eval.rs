//! Retrieval and noise-identification metrics: Recall@K over cosine
//! neighbors, threshold classification of noisy samples, NMI against a
//! seeded k-means clustering, and histogram export.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::validate_unit_rows;
use crate::numerics::{otsu_threshold, LossVector};

/// Recall@K over a query/gallery pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub query_count: usize,
    pub gallery_count: usize,
    pub ks: Vec<usize>,
}

/// Fraction of queries whose K nearest gallery items (by cosine similarity,
/// ties broken toward the lower index) contain a same-label item.
///
/// With `exclude_self`, gallery item i is hidden from query i; the two sets
/// must then be the same size.
pub fn recall_at_k(
    queries: &Array2<f64>,
    query_labels: &[usize],
    gallery: &Array2<f64>,
    gallery_labels: &[usize],
    ks: &[usize],
    exclude_self: bool,
) -> Result<RetrievalReport> {
    let nq = queries.nrows();
    let ng = gallery.nrows();
    if query_labels.len() != nq || gallery_labels.len() != ng {
        return Err(Error::domain("recall_at_k: label count mismatch"));
    }
    if queries.ncols() != gallery.ncols() {
        return Err(Error::domain("recall_at_k: dimension mismatch"));
    }
    if exclude_self && nq != ng {
        return Err(Error::domain(
            "recall_at_k: self-exclusion requires query and gallery of equal size",
        ));
    }
    if nq == 0 {
        return Err(Error::domain("recall_at_k: no queries"));
    }
    validate_unit_rows(queries, "query")?;
    validate_unit_rows(gallery, "gallery")?;
    let effective = if exclude_self { ng - 1 } else { ng };
    if ks.is_empty() {
        return Err(Error::domain("recall_at_k: no K values"));
    }
    for &k in ks {
        if k == 0 || k >= effective {
            return Err(Error::Domain(format!(
                "recall_at_k: K = {k} out of range for gallery of effective size {effective}"
            )));
        }
    }

    let max_k = *ks.iter().max().unwrap();
    let sims = queries.dot(&gallery.t());
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut order: Vec<usize> = Vec::with_capacity(ng);
    for qi in 0..nq {
        order.clear();
        order.extend((0..ng).filter(|&gi| !(exclude_self && gi == qi)));
        // Descending similarity, ascending index on ties.
        order.sort_by(|&a, &b| {
            sims[(qi, b)]
                .partial_cmp(&sims[(qi, a)])
                .expect("similarities are finite")
                .then(a.cmp(&b))
        });
        let mut first_hit = None;
        for (rank, &gi) in order.iter().take(max_k).enumerate() {
            if gallery_labels[gi] == query_labels[qi] {
                first_hit = Some(rank + 1);
                break;
            }
        }
        if let Some(rank) = first_hit {
            for (&k, count) in hits.iter_mut() {
                if rank <= k {
                    *count += 1;
                }
            }
        }
    }
    let recall_at = hits
        .into_iter()
        .map(|(k, h)| (k, h as f64 / nq as f64))
        .collect();
    Ok(RetrievalReport {
        recall_at,
        query_count: nq,
        gallery_count: ng,
        ks: ks.to_vec(),
    })
}

/// Noisy-sample classification outcome ("positive" = corrupted).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    /// Set when a rate had an empty denominator and was reported as 1 by
    /// convention.
    pub degenerate: bool,
}

/// Thresholds the losses with Otsu's method and classifies `ℓ ≥ τ` as noisy.
pub fn noisy_identification(
    proxy_losses: &LossVector,
    corrupted: &[bool],
) -> Result<IdentificationReport> {
    if corrupted.len() != proxy_losses.len() {
        return Err(Error::domain(
            "noisy_identification: flag count does not match loss count",
        ));
    }
    let threshold = otsu_threshold(proxy_losses)?.threshold;
    let mut tp = 0;
    let mut fp = 0;
    let mut tn = 0;
    let mut fne = 0;
    for (&loss, &is_noisy) in proxy_losses.values().iter().zip(corrupted) {
        let predicted = loss >= threshold;
        match (predicted, is_noisy) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fne += 1,
        }
    }
    let mut degenerate = false;
    let recall = if tp + fne == 0 {
        degenerate = true;
        1.0
    } else {
        tp as f64 / (tp + fne) as f64
    };
    let precision = if tp + fp == 0 {
        degenerate = true;
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    Ok(IdentificationReport {
        recall,
        precision,
        threshold,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fne,
        degenerate,
    })
}

/// NMI value with the degenerate-clustering marker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmiResult {
    pub value: f64,
    pub degenerate: bool,
}

/// Normalized mutual information between labels and a seeded k-means
/// clustering of the embeddings (k-means++-style seeding, 50 iterations,
/// arithmetic-mean normalization).
pub fn nmi(
    embeddings: &Array2<f64>,
    labels: &[usize],
    cluster_count: usize,
    seed: u64,
) -> Result<NmiResult> {
    let n = embeddings.nrows();
    if labels.len() != n {
        return Err(Error::domain("nmi: label count mismatch"));
    }
    if cluster_count < 2 {
        return Err(Error::domain("nmi: cluster_count must be at least 2"));
    }
    if n < cluster_count {
        return Err(Error::domain("nmi: fewer points than clusters"));
    }
    let assignments = kmeans(embeddings, cluster_count, seed);

    // Contingency table.
    let label_count = labels.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0usize; label_count]; cluster_count];
    for (&cluster, &label) in assignments.iter().zip(labels) {
        joint[cluster][label] += 1;
    }
    let nf = n as f64;
    let cluster_totals: Vec<f64> = joint
        .iter()
        .map(|row| row.iter().sum::<usize>() as f64)
        .collect();
    let label_totals: Vec<f64> = (0..label_count)
        .map(|l| joint.iter().map(|row| row[l]).sum::<usize>() as f64)
        .collect();
    let mut mutual = 0.0;
    for (u, row) in joint.iter().enumerate() {
        for (v, &count) in row.iter().enumerate() {
            if count > 0 {
                let p = count as f64 / nf;
                mutual += p * (p * nf * nf / (cluster_totals[u] * label_totals[v])).ln();
            }
        }
    }
    let entropy = |totals: &[f64]| -> f64 {
        totals
            .iter()
            .filter(|&&t| t > 0.0)
            .map(|&t| {
                let p = t / nf;
                -p * p.ln()
            })
            .sum()
    };
    let h_clusters = entropy(&cluster_totals);
    let h_labels = entropy(&label_totals);
    let denom = 0.5 * (h_clusters + h_labels);
    if denom <= 0.0 {
        return Ok(NmiResult {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(NmiResult {
        value: (mutual / denom).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Deterministic k-means with k-means++-style seeding.
fn kmeans(points: &Array2<f64>, k: usize, seed: u64) -> Vec<usize> {
    const ITERATIONS: usize = 50;
    let n = points.nrows();
    let d = points.ncols();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Seeding: first center uniform, then proportional to squared distance.
    let mut centers = Array2::<f64>::zeros((k, d));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut dist2 = vec![f64::INFINITY; n];
    for c in 1..k {
        for (i, slot) in dist2.iter_mut().enumerate() {
            let diff = &points.row(i) - &centers.row(c - 1);
            *slot = slot.min(diff.dot(&diff));
        }
        let total: f64 = dist2.iter().sum();
        let chosen = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centers.row_mut(c).assign(&points.row(chosen));
    }

    let mut assignments = vec![0usize; n];
    for _ in 0..ITERATIONS {
        let mut changed = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for c in 0..k {
                let diff = &points.row(i) - &centers.row(c);
                let dist = diff.dot(&diff);
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            if *slot != best.1 {
                *slot = best.1;
                changed = true;
            }
        }
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += &points.row(i);
        }
        for (c, &count) in counts.iter().enumerate() {
            // Empty clusters keep their previous center.
            if count > 0 {
                let mut row = sums.row_mut(c);
                row.mapv_inplace(|v| v / count as f64);
                centers.row_mut(c).assign(&row);
            }
        }
        if !changed {
            break;
        }
    }
    assignments
}

/// Equal-width histogram over `[min, max]` of the values; the last bin is
/// closed on the right.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges; empty for empty input.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::domain("histogram: bins must be at least 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("histogram: non-finite value"));
    }
    if values.is_empty() {
        return Ok(Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
        });
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = max - min;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| min + width * i as f64 / bins as f64)
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = if width == 0.0 {
            0
        } else {
            (((v - min) / width * bins as f64) as usize).min(bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Writes `bin_lo,bin_hi,count` rows (header always present).
pub fn export_histogram(values: &[f64], bins: usize, path: impl AsRef<Path>) -> Result<Histogram> {
    let hist = histogram(values, bins)?;
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "bin_lo,bin_hi,count")?;
    for (i, &count) in hist.counts.iter().enumerate() {
        writeln!(out, "{},{},{}", hist.edges[i], hist.edges[i + 1], count)?;
    }
    out.flush()?;
    Ok(hist)
}
