//! Feature datasets: fixed-length feature vectors with clean and observed
//! labels, stored as JSONL.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample: an id, a feature vector, the ground-truth label, and the
/// (possibly corrupted) observed label used for training.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub clean_label: usize,
    pub observed_label: usize,
}

impl Sample {
    pub fn is_corrupted(&self) -> bool {
        self.clean_label != self.observed_label
    }
}

/// A dataset over classes `0..class_count`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDataset {
    samples: Vec<Sample>,
    class_count: usize,
    class_names: Vec<String>,
}

/// On-disk line format: `label` is the observed label; `clean_label` is
/// written only when it differs.
#[derive(Serialize, Deserialize)]
struct SampleLine {
    id: String,
    features: Vec<f64>,
    label: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    clean_label: Option<usize>,
}

impl FeatureDataset {
    pub fn new(
        samples: Vec<Sample>,
        class_count: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("dataset has no samples"));
        }
        if class_names.len() != class_count {
            return Err(Error::Domain(format!(
                "expected {class_count} class names, got {}",
                class_names.len()
            )));
        }
        let dim = samples[0].features.len();
        if dim == 0 {
            return Err(Error::domain("feature vectors must be non-empty"));
        }
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.features.len() != dim {
                return Err(Error::Domain(format!(
                    "sample {} has {} features, expected {dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "sample {} has non-finite features",
                    s.id
                )));
            }
            if s.clean_label >= class_count || s.observed_label >= class_count {
                return Err(Error::Domain(format!(
                    "sample {} has a label outside 0..{class_count}",
                    s.id
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Domain(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(FeatureDataset {
            samples,
            class_count,
            class_names,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].features.len()
    }

    /// Classes that actually occur (by observed label), ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.class_count];
        for s in &self.samples {
            seen[s.observed_label] = true;
        }
        (0..self.class_count).filter(|&c| seen[c]).collect()
    }

    /// Classes that occur by clean label, ascending.
    pub fn present_classes_by_clean_label(&self) -> Vec<usize> {
        let mut seen = vec![false; self.class_count];
        for s in &self.samples {
            seen[s.clean_label] = true;
        }
        (0..self.class_count).filter(|&c| seen[c]).collect()
    }

    /// Deterministic per-class split by position: for each class, the first
    /// `round(count · train_fraction)` samples (in dataset order) go to the
    /// first dataset, the rest to the second. Both sides keep the full class
    /// space.
    pub fn split_per_class(&self, train_fraction: f64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&train_fraction) || train_fraction <= 0.0 {
            return Err(Error::Domain(format!(
                "train_fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let mut counts = vec![0usize; self.class_count];
        for s in &self.samples {
            counts[s.clean_label] += 1;
        }
        let cuts: Vec<usize> = counts
            .iter()
            .map(|&c| (c as f64 * train_fraction).round() as usize)
            .collect();
        let mut seen = vec![0usize; self.class_count];
        let mut first = Vec::new();
        let mut second = Vec::new();
        for s in &self.samples {
            let c = s.clean_label;
            if seen[c] < cuts[c] {
                first.push(s.clone());
            } else {
                second.push(s.clone());
            }
            seen[c] += 1;
        }
        if first.is_empty() || second.is_empty() {
            return Err(Error::domain(
                "split_per_class: a side of the split is empty",
            ));
        }
        Ok((
            FeatureDataset::new(first, self.class_count, self.class_names.clone())?,
            FeatureDataset::new(second, self.class_count, self.class_names.clone())?,
        ))
    }

    /// Replaces observed labels wholesale; sample order is preserved.
    pub fn with_observed_labels(&self, labels: &[usize]) -> Result<Self> {
        if labels.len() != self.samples.len() {
            return Err(Error::domain("label count does not match sample count"));
        }
        let samples = self
            .samples
            .iter()
            .zip(labels)
            .map(|(s, &l)| Sample {
                observed_label: l,
                ..s.clone()
            })
            .collect();
        FeatureDataset::new(samples, self.class_count, self.class_names.clone())
    }

    /// Reads JSONL `{"id", "features", "label"[, "clean_label"]}`. Class
    /// count is inferred from the largest label; names are synthesized.
    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut samples = Vec::new();
        let mut max_label = 0usize;
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SampleLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: line_no + 1,
                message: e.to_string(),
            })?;
            let clean = parsed.clean_label.unwrap_or(parsed.label);
            max_label = max_label.max(parsed.label).max(clean);
            samples.push(Sample {
                id: parsed.id,
                features: parsed.features,
                clean_label: clean,
                observed_label: parsed.label,
            });
        }
        let class_count = max_label + 1;
        let class_names = (0..class_count).map(|c| format!("class_{c}")).collect();
        FeatureDataset::new(samples, class_count, class_names)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for s in &self.samples {
            let line = serde_json::to_string(&SampleLine {
                id: s.id.clone(),
                features: s.features.clone(),
                label: s.observed_label,
                clean_label: if s.is_corrupted() {
                    Some(s.clean_label)
                } else {
                    None
                },
            })?;
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }
}
