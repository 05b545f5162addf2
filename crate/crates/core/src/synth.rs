//! Synthetic benchmark generator: hierarchically structured Gaussian class
//! clusters with a matching taxonomy and class-embedding table, split into
//! disjoint train and test classes.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureDataset, Sample};
use crate::error::{Error, Result};
use crate::losses::SemanticTable;
use crate::taxonomy::Taxonomy;

/// Generator parameters. Spreads must satisfy
/// `superclass_spread > class_spread > noise_std > 0` so the hierarchy is
/// separable by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub superclass_count: usize,
    pub classes_per_superclass: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    pub superclass_spread: f64,
    pub class_spread: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            superclass_count: 5,
            classes_per_superclass: 4,
            samples_per_class: 50,
            feature_dim: 32,
            superclass_spread: 10.0,
            class_spread: 3.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.superclass_count == 0
            || self.classes_per_superclass == 0
            || self.samples_per_class == 0
            || self.feature_dim == 0
        {
            return Err(Error::config("synth counts must all be positive"));
        }
        let ordered = self.superclass_spread > self.class_spread
            && self.class_spread > self.noise_std
            && self.noise_std > 0.0;
        if !ordered {
            return Err(Error::config(
                "spreads must satisfy superclass_spread > class_spread > noise_std > 0",
            ));
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.superclass_count * self.classes_per_superclass
    }
}

/// Everything the generator produces, over the full (unsplit) class set.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: FeatureDataset,
    pub taxonomy: Taxonomy,
    pub semantic_table: SemanticTable,
    /// Global ids of train classes (even index within each superclass).
    pub train_classes: Vec<usize>,
    /// Global ids of test classes (odd index within each superclass).
    pub test_classes: Vec<usize>,
}

/// A self-contained split: compact labels, aligned taxonomy and table.
#[derive(Clone, Debug)]
pub struct SplitArtifacts {
    pub dataset: FeatureDataset,
    pub taxonomy: Taxonomy,
    pub semantic_table: SemanticTable,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let super_dist = Normal::new(0.0, spec.superclass_spread).expect("positive spread");
    let class_dist = Normal::new(0.0, spec.class_spread).expect("positive spread");
    let noise_dist = Normal::new(0.0, spec.noise_std).expect("positive spread");

    let class_count = spec.class_count();
    let dim = spec.feature_dim;
    let mut class_centers = Array2::<f64>::zeros((class_count, dim));
    let mut class_names = Vec::with_capacity(class_count);
    let mut taxonomy = Taxonomy::with_root("root");
    let mut samples = Vec::with_capacity(class_count * spec.samples_per_class);
    let mut train_classes = Vec::new();
    let mut test_classes = Vec::new();

    for s in 0..spec.superclass_count {
        let super_center: Vec<f64> = (0..dim).map(|_| super_dist.sample(&mut rng)).collect();
        let super_node = taxonomy.add_internal(taxonomy.root(), format!("super_{s}"));
        for c in 0..spec.classes_per_superclass {
            let class_id = s * spec.classes_per_superclass + c;
            let name = format!("class_{s}_{c}");
            taxonomy.add_leaf(super_node, name.clone(), class_id);
            class_names.push(name);
            for k in 0..dim {
                class_centers[(class_id, k)] = super_center[k] + class_dist.sample(&mut rng);
            }
            if c % 2 == 0 || spec.classes_per_superclass == 1 {
                train_classes.push(class_id);
            } else {
                test_classes.push(class_id);
            }
            for i in 0..spec.samples_per_class {
                let features: Vec<f64> = (0..dim)
                    .map(|k| class_centers[(class_id, k)] + noise_dist.sample(&mut rng))
                    .collect();
                samples.push(Sample {
                    id: format!("c{class_id:03}_i{i:04}"),
                    features,
                    clean_label: class_id,
                    observed_label: class_id,
                });
            }
        }
    }

    let dataset = FeatureDataset::new(samples, class_count, class_names)?;
    let semantic_table = SemanticTable::new(class_centers)?;
    Ok(SynthOutput {
        dataset,
        taxonomy,
        semantic_table,
        train_classes,
        test_classes,
    })
}

impl SynthOutput {
    pub fn train_split(&self) -> Result<SplitArtifacts> {
        self.split(&self.train_classes)
    }

    /// Test split as a plain dataset (taxonomy and table are train-side
    /// artifacts; retrieval evaluation needs only labels).
    pub fn test_split(&self) -> Result<FeatureDataset> {
        if self.test_classes.is_empty() {
            return Err(Error::config(
                "no test classes: classes_per_superclass must be at least 2",
            ));
        }
        Ok(self.split(&self.test_classes)?.dataset)
    }

    fn split(&self, classes: &[usize]) -> Result<SplitArtifacts> {
        if classes.is_empty() {
            return Err(Error::domain("split: empty class list"));
        }
        let remap: BTreeMap<usize, usize> = classes
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new))
            .collect();
        let samples: Vec<Sample> = self
            .dataset
            .samples()
            .iter()
            .filter(|s| remap.contains_key(&s.clean_label))
            .map(|s| Sample {
                id: s.id.clone(),
                features: s.features.clone(),
                clean_label: remap[&s.clean_label],
                observed_label: remap[&s.observed_label],
            })
            .collect();
        let class_names: Vec<String> = classes
            .iter()
            .map(|&c| self.dataset.class_names()[c].clone())
            .collect();
        let dataset = FeatureDataset::new(samples, classes.len(), class_names)?;
        let keep = remap.keys().copied().collect();
        let taxonomy = self
            .taxonomy
            .prune_to_classes(&keep)?
            .with_class_ids_remapped(&remap)?;
        let mut table = Array2::zeros((classes.len(), self.semantic_table.dim()));
        for (&old, &new) in &remap {
            table.row_mut(new).assign(&self.semantic_table.embeddings().row(old));
        }
        Ok(SplitArtifacts {
            dataset,
            taxonomy,
            semantic_table: SemanticTable::new(table)?,
        })
    }
}
