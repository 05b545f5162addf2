use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use procsim_core::taxonomy::{build_hierarchy, LexicalGraph};
use procsim_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::util::ensure_out_dir;

#[derive(Args)]
pub struct BuildTaxonomyArgs {
    /// Class names, one per line; line order defines class ids.
    #[arg(long)]
    pub classes: PathBuf,
    /// TSV hypernym edges: `child<TAB>hypernym`.
    #[arg(long)]
    pub graph: PathBuf,
    /// JSON senses map: {"class name": ["concept", ...]}.
    #[arg(long)]
    pub senses: PathBuf,
    /// Concept id every class must reach.
    #[arg(long)]
    pub root: String,
    /// Optional JSON map {"class name": "forced hypernym"}.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: BuildTaxonomyArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "build-taxonomy",
        serde_json::json!({
            "classes": args.classes.display().to_string(),
            "graph": args.graph.display().to_string(),
            "senses": args.senses.display().to_string(),
            "root": args.root,
            "overrides": args.overrides.as_ref().map(|p| p.display().to_string()),
        }),
    );
    manifest.add_input(&args.classes)?;
    manifest.add_input(&args.graph)?;
    manifest.add_input(&args.senses)?;

    let class_names: Vec<String> = std::fs::read_to_string(&args.classes)?
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if class_names.is_empty() {
        return Err(Error::config("class file contains no class names"));
    }
    let graph = LexicalGraph::read(&args.graph, &args.senses)?;
    let overrides: BTreeMap<String, String> = match &args.overrides {
        Some(path) => {
            manifest.add_input(path)?;
            serde_json::from_str(&std::fs::read_to_string(path)?)?
        }
        None => BTreeMap::new(),
    };

    let taxonomy = build_hierarchy(&class_names, &graph, &args.root, &overrides)?;
    ensure_out_dir(&args.out_dir)?;
    let out_path = args.out_dir.join("taxonomy.json");
    taxonomy.write_json(&out_path)?;
    manifest.add_output(&out_path)?;
    manifest.write(&args.out_dir)?;

    println!(
        "build-taxonomy: {} classes, {} nodes -> {}",
        class_names.len(),
        taxonomy.node_count(),
        out_path.display()
    );
    Ok(())
}
