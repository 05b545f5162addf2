use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use procsim_core::dataset::FeatureDataset;
use procsim_core::eval::{noisy_identification, recall_at_k, IdentificationReport, RetrievalReport};
use procsim_core::losses::proxy_nca_per_sample;
use procsim_core::model::Checkpoint;
use procsim_core::noise::{ManifestRecord, NoiseManifest, NoiseModel, NoiseSpecEcho};
use procsim_core::numerics::LossVector;
use procsim_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::util::{embed_dataset, ensure_out_dir, parse_ks};

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated K values, e.g. `1,2,4,8`.
    #[arg(long, default_value = "1,2,4,8")]
    pub ks: String,
    /// Noise manifest; enables the noisy-identification report.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct EvalReport {
    retrieval: RetrievalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    identification: Option<IdentificationReport>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let ks = parse_ks(&args.ks)?;
    let mut run_manifest = RunManifest::new(
        "eval",
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "dataset": args.dataset.display().to_string(),
            "ks": ks,
            "manifest": args.manifest.as_ref().map(|p| p.display().to_string()),
        }),
    );
    run_manifest.add_input(&args.checkpoint)?;
    run_manifest.add_input(&args.dataset)?;

    let (embedder, proxies, train_config) = Checkpoint::load(&args.checkpoint)?.into_parts()?;
    let dataset = FeatureDataset::read_jsonl(&args.dataset)?;
    let (embeddings, matrix) = embed_dataset(&embedder, &dataset)?;

    let retrieval = recall_at_k(
        &embeddings,
        &matrix.clean_labels,
        &embeddings,
        &matrix.clean_labels,
        &ks,
        true,
    )?;

    let identification = match &args.manifest {
        Some(path) => {
            run_manifest.add_input(path)?;
            // The echo is informational here; records carry the decisions.
            let noise_manifest = NoiseManifest::read_jsonl(
                path,
                NoiseSpecEcho {
                    model: NoiseModel::Uniform,
                    probability: f64::NAN,
                    seed: 0,
                },
            )?;
            let corrupted = corrupted_flags(&dataset, &noise_manifest)?;
            if proxies.class_count() != dataset.class_count() {
                return Err(Error::Config(format!(
                    "checkpoint has {} proxies but the dataset has {} classes",
                    proxies.class_count(),
                    dataset.class_count()
                )));
            }
            let weights = vec![1.0 / dataset.len() as f64; dataset.len()];
            let losses = proxy_nca_per_sample(
                &embeddings,
                &matrix.observed_labels,
                proxies.matrix(),
                train_config.loss.proxy_scale,
                train_config.loss.include_target_in_denominator,
                &weights,
            )?;
            Some(noisy_identification(
                &LossVector::new(losses.per_sample)?,
                &corrupted,
            )?)
        }
        None => None,
    };

    ensure_out_dir(&args.out_dir)?;
    let report = EvalReport {
        retrieval,
        identification,
    };
    let report_path = args.out_dir.join("eval_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    run_manifest.add_output(&report_path)?;
    run_manifest.write(&args.out_dir)?;

    let mut summary = String::new();
    for (k, v) in &report.retrieval.recall_at {
        summary.push_str(&format!(" R@{k}={v:.4}"));
    }
    if let Some(id) = &report.identification {
        summary.push_str(&format!(
            " | id recall={:.4} precision={:.4}",
            id.recall, id.precision
        ));
    }
    println!("eval:{summary} -> {}", report_path.display());
    Ok(())
}

/// Per-sample corrupted flags in dataset order, joined by id.
fn corrupted_flags(dataset: &FeatureDataset, manifest: &NoiseManifest) -> Result<Vec<bool>> {
    let by_id: std::collections::HashMap<&str, &ManifestRecord> = manifest
        .records
        .iter()
        .map(|r| (r.id.as_str(), r))
        .collect();
    dataset
        .samples()
        .iter()
        .map(|s| {
            by_id
                .get(s.id.as_str())
                .map(|r| r.corrupted)
                .ok_or_else(|| {
                    Error::Config(format!("manifest has no record for sample {}", s.id))
                })
        })
        .collect()
}
