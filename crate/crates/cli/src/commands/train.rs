use std::path::PathBuf;

use clap::Args;

use procsim_core::confidence::ThresholdStrategy;
use procsim_core::dataset::FeatureDataset;
use procsim_core::losses::{SemanticTable, TopkAssignments};
use procsim_core::model::{train, Checkpoint, TrainConfig};
use procsim_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::util::ensure_out_dir;

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub semantic_table: PathBuf,
    /// Training configuration JSON (strict schema); flags override fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-sample top-k class lists (JSONL {"id", "topk"}).
    #[arg(long)]
    pub topk: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// otsu | global_average | gmm
    #[arg(long)]
    pub strategy: Option<String>,
    /// Disable confidence weighting (plain similarity-loss training).
    #[arg(long, default_value_t = false)]
    pub no_confidence: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn parse_strategy(text: &str) -> Result<ThresholdStrategy> {
    match text {
        "otsu" => Ok(ThresholdStrategy::Otsu),
        "global_average" => Ok(ThresholdStrategy::GlobalAverage),
        "gmm" => Ok(ThresholdStrategy::Gmm),
        other => Err(Error::Config(format!(
            "unknown threshold strategy `{other}` (expected otsu, global_average, or gmm)"
        ))),
    }
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(lambda) = args.lambda {
        cfg.confidence.lambda = lambda;
    }
    if let Some(omega) = args.omega {
        cfg.loss.omega = omega;
    }
    if let Some(strategy) = &args.strategy {
        cfg.confidence.strategy = parse_strategy(strategy)?;
    }
    if args.no_confidence {
        cfg.use_confidence = false;
    }

    let mut manifest = RunManifest::new(
        "train",
        serde_json::json!({
            "dataset": args.dataset.display().to_string(),
            "semantic_table": args.semantic_table.display().to_string(),
            "topk": args.topk.as_ref().map(|p| p.display().to_string()),
            "resolved": serde_json::to_value(&cfg)?,
        }),
    );
    manifest.add_input(&args.dataset)?;
    manifest.add_input(&args.semantic_table)?;
    if let Some(path) = &args.config {
        manifest.add_input(path)?;
    }

    let dataset = FeatureDataset::read_jsonl(&args.dataset)?;
    let table = SemanticTable::read_csv(&args.semantic_table)?;
    let topk = match &args.topk {
        Some(path) => {
            manifest.add_input(path)?;
            Some(TopkAssignments::read_jsonl(path)?)
        }
        None => None,
    };

    let output = train(&dataset, &table, topk.as_ref(), &cfg)?;

    ensure_out_dir(&args.out_dir)?;
    let checkpoint_path = args.out_dir.join("checkpoint.json");
    let history_path = args.out_dir.join("history.jsonl");
    Checkpoint::from_parts(&output.embedder, &output.proxies, &cfg).save(&checkpoint_path)?;
    output.history.write_jsonl(&history_path)?;
    manifest.add_output(&checkpoint_path)?;
    manifest.add_output(&history_path)?;
    manifest.write(&args.out_dir)?;

    let last = output.history.records.last().expect("at least one record");
    println!(
        "train: {} iterations, final mean losses dml={:.4} proxy={:.4}, tau={:.4} -> {}",
        output.history.records.len(),
        last.mean_dml,
        last.mean_proxy,
        last.tau,
        checkpoint_path.display()
    );
    Ok(())
}
