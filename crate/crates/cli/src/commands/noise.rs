use std::path::PathBuf;

use clap::Args;

use procsim_core::dataset::FeatureDataset;
use procsim_core::noise::{audit, corrupt, read_category_map, NoiseSpec};
use procsim_core::taxonomy::Taxonomy;
use procsim_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::util::ensure_out_dir;

#[derive(Args)]
pub struct InjectNoiseArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// uniform | semantic | category
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub seed: u64,
    /// Taxonomy JSON (required for the semantic model).
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Category CSV `class_id,category` (required for the category model).
    #[arg(long)]
    pub categories: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: InjectNoiseArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "inject-noise",
        serde_json::json!({
            "dataset": args.dataset.display().to_string(),
            "model": args.model,
            "p": args.p,
            "seed": args.seed,
            "taxonomy": args.taxonomy.as_ref().map(|p| p.display().to_string()),
            "categories": args.categories.as_ref().map(|p| p.display().to_string()),
        }),
    );
    manifest.add_input(&args.dataset)?;
    let dataset = FeatureDataset::read_jsonl(&args.dataset)?;

    let taxonomy = match &args.taxonomy {
        Some(path) => {
            manifest.add_input(path)?;
            Some(Taxonomy::read_json(path)?)
        }
        None => None,
    };
    let category_map = match &args.categories {
        Some(path) => {
            manifest.add_input(path)?;
            Some(read_category_map(path)?)
        }
        None => None,
    };

    let spec = match args.model.as_str() {
        "uniform" => NoiseSpec::uniform(args.p, args.seed),
        "semantic" => NoiseSpec::semantic(
            args.p,
            args.seed,
            taxonomy
                .clone()
                .ok_or_else(|| Error::config("--taxonomy is required for the semantic model"))?,
        ),
        "category" => NoiseSpec::category(
            args.p,
            args.seed,
            category_map
                .clone()
                .ok_or_else(|| Error::config("--categories is required for the category model"))?,
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown noise model `{other}` (expected uniform, semantic, or category)"
            )))
        }
    };

    let (corrupted, noise_manifest) = corrupt(&dataset, &spec)?;
    let report = audit(&noise_manifest, taxonomy.as_ref(), category_map.as_ref())?;

    ensure_out_dir(&args.out_dir)?;
    let dataset_path = args.out_dir.join("noisy.jsonl");
    let manifest_path = args.out_dir.join("noise_manifest.jsonl");
    corrupted.write_jsonl(&dataset_path)?;
    noise_manifest.write_jsonl(&manifest_path)?;
    manifest.add_output(&dataset_path)?;
    manifest.add_output(&manifest_path)?;
    manifest.write(&args.out_dir)?;

    println!(
        "inject-noise: {} model at p={} corrupted {}/{} samples (rate {:.4}) -> {}",
        spec.model,
        args.p,
        report.corrupted,
        report.total,
        report.realized_rate,
        dataset_path.display()
    );
    Ok(())
}
