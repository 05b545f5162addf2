use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use procsim_core::confidence::ThresholdStrategy;
use procsim_core::dataset::FeatureDataset;
use procsim_core::eval::recall_at_k;
use procsim_core::losses::SemanticTable;
use procsim_core::model::{train, TrainConfig};
use procsim_core::noise::{corrupt, NoiseModel, NoiseSpec};
use procsim_core::synth::{generate, SynthSpec};
use procsim_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::util::{embed_dataset, ensure_out_dir};

#[derive(Args)]
pub struct AblateArgs {
    /// Grid specification JSON.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Grid over noise models × probabilities × threshold strategies. Each cell
/// averages Recall@1 over `seeds`; all cells of one (model, p) pair share
/// the same corrupted dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationGrid {
    pub synth: SynthSpec,
    pub noise_models: Vec<NoiseModel>,
    pub probabilities: Vec<f64>,
    pub strategies: Vec<ThresholdStrategy>,
    pub seeds: Vec<u64>,
    pub noise_seed: u64,
    /// Per-class fraction of the train split used for fitting; the rest is
    /// the held-out evaluation set.
    pub train_fraction: f64,
    /// Also run a unit-confidence baseline row (plain similarity loss).
    pub include_unit_baseline: bool,
    pub train: TrainConfig,
}

impl Default for AblationGrid {
    fn default() -> Self {
        AblationGrid {
            synth: SynthSpec::default(),
            noise_models: vec![NoiseModel::Uniform, NoiseModel::Semantic],
            probabilities: vec![0.0, 0.2, 0.5],
            strategies: vec![
                ThresholdStrategy::Otsu,
                ThresholdStrategy::GlobalAverage,
                ThresholdStrategy::Gmm,
            ],
            seeds: vec![1, 2, 3],
            noise_seed: 42,
            train_fraction: 0.6,
            include_unit_baseline: true,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    /// Strategy name, or "unit_baseline" for the σ ≡ 1 row.
    pub method: String,
    pub noise_model: NoiseModel,
    pub probability: f64,
    /// Recall@1 on held-out samples of the train classes, per seed.
    pub recall1_holdout: Vec<f64>,
    pub recall1_holdout_mean: f64,
    /// Recall@1 on the disjoint-class test split, per seed.
    pub recall1_test: Vec<f64>,
    pub recall1_test_mean: f64,
}

#[derive(Serialize)]
pub struct AblationReport {
    pub grid: AblationGrid,
    pub rows: Vec<AblationRow>,
}

pub fn run(args: AblateArgs) -> Result<()> {
    let grid: AblationGrid = serde_json::from_str(&std::fs::read_to_string(&args.grid)?)?;
    let mut manifest = RunManifest::new("ablate", serde_json::to_value(&grid)?);
    manifest.add_input(&args.grid)?;

    let report = run_grid(&grid)?;

    ensure_out_dir(&args.out_dir)?;
    let json_path = args.out_dir.join("ablation_report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    let csv_path = args.out_dir.join("ablation_table.csv");
    write_csv(&report, &csv_path)?;
    manifest.add_output(&json_path)?;
    manifest.add_output(&csv_path)?;
    manifest.write(&args.out_dir)?;

    print_table(&report);
    println!("ablate: {} rows -> {}", report.rows.len(), json_path.display());
    Ok(())
}

pub fn run_grid(grid: &AblationGrid) -> Result<AblationReport> {
    validate(grid)?;
    let synth_output = generate(&grid.synth)?;
    let split = synth_output.train_split()?;
    let test_split = synth_output.test_split()?;

    let mut rows = Vec::new();
    for &model in &grid.noise_models {
        for &p in &grid.probabilities {
            let spec = match model {
                NoiseModel::Uniform => NoiseSpec::uniform(p, grid.noise_seed),
                NoiseModel::Semantic => {
                    NoiseSpec::semantic(p, grid.noise_seed, split.taxonomy.clone())
                }
                NoiseModel::Category => {
                    return Err(Error::config(
                        "the ablation grid supports uniform and semantic noise",
                    ))
                }
            };
            let (noisy, _) = corrupt(&split.dataset, &spec)?;
            let (fit_set, held_set) = noisy.split_per_class(grid.train_fraction)?;

            for &strategy in &grid.strategies {
                let mut cfg = grid.train.clone();
                cfg.confidence.strategy = strategy;
                rows.push(run_cell(
                    strategy.to_string(),
                    model,
                    p,
                    &cfg,
                    grid,
                    &fit_set,
                    &held_set,
                    &test_split,
                    &split.semantic_table,
                )?);
            }
            if grid.include_unit_baseline {
                let mut cfg = grid.train.clone();
                cfg.use_confidence = false;
                cfg.loss.omega = 0.0;
                rows.push(run_cell(
                    "unit_baseline".to_string(),
                    model,
                    p,
                    &cfg,
                    grid,
                    &fit_set,
                    &held_set,
                    &test_split,
                    &split.semantic_table,
                )?);
            }
        }
    }
    Ok(AblationReport {
        grid: grid.clone(),
        rows,
    })
}

fn validate(grid: &AblationGrid) -> Result<()> {
    if grid.noise_models.is_empty()
        || grid.probabilities.is_empty()
        || grid.strategies.is_empty()
        || grid.seeds.is_empty()
    {
        return Err(Error::config("ablation grid has an empty axis"));
    }
    if let Some(&p) = grid
        .probabilities
        .iter()
        .find(|p| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    grid.train.validate()
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    method: String,
    model: NoiseModel,
    probability: f64,
    cfg: &TrainConfig,
    grid: &AblationGrid,
    fit_set: &FeatureDataset,
    held_set: &FeatureDataset,
    test_split: &FeatureDataset,
    table: &SemanticTable,
) -> Result<AblationRow> {
    let mut recall1_holdout = Vec::with_capacity(grid.seeds.len());
    let mut recall1_test = Vec::with_capacity(grid.seeds.len());
    for &seed in &grid.seeds {
        let mut cell_cfg = cfg.clone();
        cell_cfg.seed = seed;
        let output = train(fit_set, table, None, &cell_cfg)?;
        recall1_holdout.push(recall1(&output.embedder, held_set)?);
        recall1_test.push(recall1(&output.embedder, test_split)?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(AblationRow {
        method,
        noise_model: model,
        probability,
        recall1_holdout_mean: mean(&recall1_holdout),
        recall1_holdout,
        recall1_test_mean: mean(&recall1_test),
        recall1_test,
    })
}

fn recall1(embedder: &procsim_core::model::Embedder, ds: &FeatureDataset) -> Result<f64> {
    let (embeddings, matrix) = embed_dataset(embedder, ds)?;
    Ok(recall_at_k(
        &embeddings,
        &matrix.clean_labels,
        &embeddings,
        &matrix.clean_labels,
        &[1],
        true,
    )?
    .recall_at[&1])
}

fn write_csv(report: &AblationReport, path: &std::path::Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "method,noise_model,probability,recall1_holdout_mean,recall1_test_mean"
    )?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.method,
            row.noise_model,
            row.probability,
            row.recall1_holdout_mean,
            row.recall1_test_mean
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Prints methods × (model, p) Recall@1 means, one column group per model.
fn print_table(report: &AblationReport) {
    let grid = &report.grid;
    print!("{:<18}", "method");
    for &model in &grid.noise_models {
        for &p in &grid.probabilities {
            print!(" {:>16}", format!("{model}@{p}"));
        }
    }
    println!();
    let mut methods: Vec<&str> = Vec::new();
    for row in &report.rows {
        if !methods.contains(&row.method.as_str()) {
            methods.push(&row.method);
        }
    }
    for method in methods {
        print!("{method:<18}");
        for &model in &grid.noise_models {
            for &p in &grid.probabilities {
                let cell = report.rows.iter().find(|r| {
                    r.method == method && r.noise_model == model && r.probability == p
                });
                match cell {
                    Some(row) => print!(" {:>16.4}", row.recall1_holdout_mean),
                    None => print!(" {:>16}", "-"),
                }
            }
        }
        println!();
    }
}
