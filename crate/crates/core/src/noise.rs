//! Controlled label corruption under three models: uniform, semantic
//! (taxonomy-driven), and category (flat groups), with an auditable
//! manifest.
//!
//! Corruption is an offline dataset transformation. Each sample gets its own
//! RNG keyed by (seed, sample id), so the outcome for one sample is
//! independent of dataset ordering and of every other sample.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

/// The label-corruption model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Wrong label uniform over all other classes.
    Uniform,
    /// Wrong label uniform over the taxonomy siblings of the clean class.
    Semantic,
    /// Wrong label uniform over the clean class's category.
    Category,
}

impl std::fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            NoiseModel::Uniform => "uniform",
            NoiseModel::Semantic => "semantic",
            NoiseModel::Category => "category",
        };
        f.write_str(name)
    }
}

/// Full corruption specification.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub probability: f64,
    pub seed: u64,
    /// Required by the semantic model.
    pub taxonomy: Option<Taxonomy>,
    /// Required by the category model: class id → category name.
    pub category_map: Option<BTreeMap<usize, String>>,
}

impl NoiseSpec {
    pub fn uniform(probability: f64, seed: u64) -> Self {
        NoiseSpec {
            model: NoiseModel::Uniform,
            probability,
            seed,
            taxonomy: None,
            category_map: None,
        }
    }

    pub fn semantic(probability: f64, seed: u64, taxonomy: Taxonomy) -> Self {
        NoiseSpec {
            model: NoiseModel::Semantic,
            probability,
            seed,
            taxonomy: Some(taxonomy),
            category_map: None,
        }
    }

    pub fn category(probability: f64, seed: u64, category_map: BTreeMap<usize, String>) -> Self {
        NoiseSpec {
            model: NoiseModel::Category,
            probability,
            seed,
            taxonomy: None,
            category_map: Some(category_map),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) || !self.probability.is_finite() {
            return Err(Error::Domain(format!(
                "corruption probability must lie in [0, 1], got {}",
                self.probability
            )));
        }
        match self.model {
            NoiseModel::Semantic if self.taxonomy.is_none() => {
                Err(Error::config("semantic noise requires a taxonomy"))
            }
            NoiseModel::Category if self.category_map.is_none() => {
                Err(Error::config("category noise requires a category map"))
            }
            _ => Ok(()),
        }
    }
}

/// Summary of the spec that produced a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpecEcho {
    pub model: NoiseModel,
    pub probability: f64,
    pub seed: u64,
}

/// One corruption decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub clean_label: usize,
    pub noisy_label: usize,
    pub corrupted: bool,
}

/// Per-sample corruption decisions plus the spec that generated them.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseManifest {
    pub records: Vec<ManifestRecord>,
    pub spec: NoiseSpecEcho,
    pub realized_rate: f64,
}

impl NoiseManifest {
    /// Writes one JSON record per line.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for record in &self.records {
            writeln!(out, "{}", serde_json::to_string(record)?)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads records; `spec` must be supplied by the caller since the JSONL
    /// format carries only per-sample lines.
    pub fn read_jsonl(path: impl AsRef<Path>, spec: NoiseSpecEcho) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut records = Vec::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: line_no + 1,
                    message: e.to_string(),
                })?;
            records.push(record);
        }
        let corrupted = records.iter().filter(|r| r.corrupted).count();
        let realized_rate = if records.is_empty() {
            0.0
        } else {
            corrupted as f64 / records.len() as f64
        };
        Ok(NoiseManifest {
            records,
            spec,
            realized_rate,
        })
    }
}

/// Reads a `class_id,category` CSV into a category map.
pub fn read_category_map(path: impl AsRef<Path>) -> Result<BTreeMap<usize, String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut map = BTreeMap::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            message,
        };
        let class_id: usize = parts
            .next()
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("bad class id: {e}")))?;
        let category = parts
            .next()
            .ok_or_else(|| parse_err("expected `class_id,category`".into()))?
            .trim()
            .to_string();
        map.insert(class_id, category);
    }
    Ok(map)
}

/// Per-class candidate sets under `spec`, for the classes in `classes`.
///
/// Every returned list is ascending, never contains the class itself, and is
/// guaranteed non-empty (a class with no legal wrong label is a
/// configuration error).
fn candidate_sets(
    spec: &NoiseSpec,
    classes: &[usize],
    class_count: usize,
) -> Result<BTreeMap<usize, Vec<usize>>> {
    let mut out = BTreeMap::new();
    for &class in classes {
        let candidates: Vec<usize> = match spec.model {
            NoiseModel::Uniform => (0..class_count).filter(|&c| c != class).collect(),
            NoiseModel::Semantic => {
                let taxonomy = spec.taxonomy.as_ref().expect("validated");
                taxonomy
                    .semantic_candidates(class)?
                    .into_iter()
                    .collect()
            }
            NoiseModel::Category => {
                let map = spec.category_map.as_ref().expect("validated");
                let category = map.get(&class).ok_or_else(|| {
                    Error::Config(format!("class {class} missing from the category map"))
                })?;
                map.iter()
                    .filter(|(&c, cat)| c != class && *cat == category)
                    .map(|(&c, _)| c)
                    .collect()
            }
        };
        if candidates.is_empty() {
            return Err(Error::Config(format!(
                "class {class} has no corruption candidates under the {} model",
                spec.model
            )));
        }
        out.insert(class, candidates);
    }
    Ok(out)
}

/// RNG keyed by (seed, sample id); independent of dataset ordering.
fn sample_rng(seed: u64, sample_id: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(sample_id.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}

/// Corrupts observed labels in place of the clean ones.
///
/// Each sample is flagged independently with probability `p`; flagged
/// samples draw a wrong label uniformly from their class's candidate set.
/// Features, ids, and clean labels never change.
pub fn corrupt(
    dataset: &FeatureDataset,
    spec: &NoiseSpec,
) -> Result<(FeatureDataset, NoiseManifest)> {
    spec.validate()?;
    let present = dataset.present_classes_by_clean_label();
    let candidates = candidate_sets(spec, &present, dataset.class_count())?;

    let mut labels = Vec::with_capacity(dataset.len());
    let mut records = Vec::with_capacity(dataset.len());
    let mut corrupted_count = 0usize;
    for sample in dataset.samples() {
        let mut rng = sample_rng(spec.seed, &sample.id);
        let flagged = rng.random::<f64>() < spec.probability;
        let noisy = if flagged {
            let set = &candidates[&sample.clean_label];
            set[rng.random_range(0..set.len())]
        } else {
            sample.clean_label
        };
        let corrupted = noisy != sample.clean_label;
        if corrupted {
            corrupted_count += 1;
        }
        labels.push(noisy);
        records.push(ManifestRecord {
            id: sample.id.clone(),
            clean_label: sample.clean_label,
            noisy_label: noisy,
            corrupted,
        });
    }
    let corrupted_dataset = dataset.with_observed_labels(&labels)?;
    let manifest = NoiseManifest {
        records,
        spec: NoiseSpecEcho {
            model: spec.model,
            probability: spec.probability,
            seed: spec.seed,
        },
        realized_rate: corrupted_count as f64 / dataset.len() as f64,
    };
    Ok((corrupted_dataset, manifest))
}

/// Audit outcome: rates and per-class counts. Only produced when every
/// assignment is legal; otherwise [`corrupt`]'s counterpart error lists the
/// offending ids.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub total: usize,
    pub corrupted: usize,
    pub realized_rate: f64,
    pub per_class_corruptions: BTreeMap<usize, usize>,
}

/// Verifies a manifest against the noise model's legal candidate sets.
pub fn audit(
    manifest: &NoiseManifest,
    taxonomy: Option<&Taxonomy>,
    category_map: Option<&BTreeMap<usize, String>>,
) -> Result<AuditReport> {
    let mut per_class: BTreeMap<usize, usize> = BTreeMap::new();
    let mut offending = Vec::new();
    let mut corrupted = 0usize;
    for record in &manifest.records {
        let consistent = record.corrupted == (record.clean_label != record.noisy_label);
        let legal = if !consistent {
            false
        } else if !record.corrupted {
            true
        } else {
            match manifest.spec.model {
                NoiseModel::Uniform => true,
                NoiseModel::Semantic => {
                    let taxonomy = taxonomy.ok_or_else(|| {
                        Error::config("auditing a semantic manifest requires the taxonomy")
                    })?;
                    taxonomy
                        .semantic_candidates(record.clean_label)?
                        .contains(&record.noisy_label)
                }
                NoiseModel::Category => {
                    let map = category_map.ok_or_else(|| {
                        Error::config("auditing a category manifest requires the category map")
                    })?;
                    map.get(&record.clean_label) == map.get(&record.noisy_label)
                        && map.contains_key(&record.clean_label)
                }
            }
        };
        if !legal {
            offending.push(record.id.clone());
            continue;
        }
        if record.corrupted {
            corrupted += 1;
            *per_class.entry(record.clean_label).or_insert(0) += 1;
        }
    }
    if !offending.is_empty() {
        let count = offending.len();
        offending.truncate(16);
        return Err(Error::AuditFailure {
            count,
            ids: offending,
        });
    }
    let total = manifest.records.len();
    Ok(AuditReport {
        total,
        corrupted,
        realized_rate: if total == 0 {
            0.0
        } else {
            corrupted as f64 / total as f64
        },
        per_class_corruptions: per_class,
    })
}
