//! Shared helpers for the command implementations.

use std::path::Path;

use ndarray::Array2;

use procsim_core::dataset::FeatureDataset;
use procsim_core::error::{Error, Result};
use procsim_core::model::Embedder;

pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Parses a comma-separated K list like `1,2,4,8`.
pub fn parse_ks(text: &str) -> Result<Vec<usize>> {
    let ks = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad K value `{part}`: {e}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    if ks.is_empty() {
        return Err(Error::config("no K values given"));
    }
    Ok(ks)
}

/// Feature matrix plus clean and observed label vectors, in dataset order.
pub struct DatasetMatrix {
    pub features: Array2<f64>,
    pub clean_labels: Vec<usize>,
    pub observed_labels: Vec<usize>,
}

pub fn dataset_matrix(dataset: &FeatureDataset) -> DatasetMatrix {
    let mut features = Array2::zeros((dataset.len(), dataset.feature_dim()));
    let mut clean_labels = Vec::with_capacity(dataset.len());
    let mut observed_labels = Vec::with_capacity(dataset.len());
    for (i, s) in dataset.samples().iter().enumerate() {
        for (k, &v) in s.features.iter().enumerate() {
            features[(i, k)] = v;
        }
        clean_labels.push(s.clean_label);
        observed_labels.push(s.observed_label);
    }
    DatasetMatrix {
        features,
        clean_labels,
        observed_labels,
    }
}

pub fn embed_dataset(embedder: &Embedder, dataset: &FeatureDataset) -> Result<(Array2<f64>, DatasetMatrix)> {
    let matrix = dataset_matrix(dataset);
    let embeddings = embedder.embed(&matrix.features)?;
    Ok((embeddings, matrix))
}

