//! Per-iteration training records, exportable as JSONL.
//!
//! Wall time is kept in memory for reporting but excluded from the
//! serialized form so that identical seeds reproduce byte-identical history
//! files.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_dml: f64,
    pub mean_proxy: f64,
    pub tau: f64,
    pub sigma_mean: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// True when a GMM threshold fit fell back to Otsu this iteration.
    pub gmm_fallback: bool,
    /// Otsu classification recall over the batch's proxy losses; present
    /// when the batch contains at least one corrupted sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noisy_recall_proxy: Option<f64>,
    /// Same procedure over the batch's per-sample DML losses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noisy_recall_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_mean_clean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_mean_corrupted: Option<f64>,
    /// Per-sample batch values, in batch order.
    pub proxy_losses: Vec<f64>,
    pub ms_losses: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub corrupted: Vec<bool>,
    #[serde(skip)]
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
}

impl TrainHistory {
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for record in &self.records {
            writeln!(out, "{}", serde_json::to_string(record)?)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut records = Vec::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: IterationRecord =
                serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: line_no + 1,
                    message: e.to_string(),
                })?;
            records.push(record);
        }
        Ok(TrainHistory { records })
    }

    /// Mean of an optional per-iteration statistic over the last `window`
    /// records that carry it.
    pub fn mean_over_last(
        &self,
        window: usize,
        select: impl Fn(&IterationRecord) -> Option<f64>,
    ) -> Option<f64> {
        let start = self.records.len().saturating_sub(window);
        let values: Vec<f64> = self.records[start..].iter().filter_map(select).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}
