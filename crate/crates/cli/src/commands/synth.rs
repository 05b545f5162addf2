use std::path::PathBuf;

use clap::Args;

use procsim_core::synth::{generate, SynthSpec};
use procsim_core::Result;

use crate::manifest::RunManifest;
use crate::util::ensure_out_dir;

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub superclasses: usize,
    #[arg(long, default_value_t = 4)]
    pub classes_per_superclass: usize,
    #[arg(long, default_value_t = 50)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 10.0)]
    pub superclass_spread: f64,
    #[arg(long, default_value_t = 3.0)]
    pub class_spread: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for train.jsonl, test.jsonl, taxonomy.json,
    /// semantic.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        superclass_count: args.superclasses,
        classes_per_superclass: args.classes_per_superclass,
        samples_per_class: args.samples_per_class,
        feature_dim: args.feature_dim,
        superclass_spread: args.superclass_spread,
        class_spread: args.class_spread,
        noise_std: args.noise_std,
        seed: args.seed,
    };
    let mut manifest = RunManifest::new("synth", serde_json::to_value(spec)?);
    ensure_out_dir(&args.out_dir)?;

    let output = generate(&spec)?;
    let train = output.train_split()?;
    let test = output.test_split()?;

    let train_path = args.out_dir.join("train.jsonl");
    let test_path = args.out_dir.join("test.jsonl");
    let taxonomy_path = args.out_dir.join("taxonomy.json");
    let table_path = args.out_dir.join("semantic.csv");
    train.dataset.write_jsonl(&train_path)?;
    test.write_jsonl(&test_path)?;
    train.taxonomy.write_json(&taxonomy_path)?;
    train.semantic_table.write_csv(&table_path)?;

    for path in [&train_path, &test_path, &taxonomy_path, &table_path] {
        manifest.add_output(path)?;
    }
    manifest.write(&args.out_dir)?;

    println!(
        "synth: {} train samples over {} classes, {} test samples over {} classes -> {}",
        train.dataset.len(),
        train.dataset.class_count(),
        test.len(),
        test.class_count(),
        args.out_dir.display()
    );
    Ok(())
}
