use std::path::PathBuf;

use clap::Args;

use procsim_core::eval::export_histogram;
use procsim_core::model::TrainHistory;
use procsim_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::util::ensure_out_dir;

#[derive(Args)]
pub struct AnalyzeConfidenceArgs {
    /// Training history JSONL.
    #[arg(long)]
    pub history: PathBuf,
    /// Number of trailing iterations to aggregate.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: AnalyzeConfidenceArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "analyze-confidence",
        serde_json::json!({
            "history": args.history.display().to_string(),
            "window": args.window,
            "bins": args.bins,
        }),
    );
    manifest.add_input(&args.history)?;

    let history = TrainHistory::read_jsonl(&args.history)?;
    if history.records.is_empty() {
        return Err(Error::domain("history contains no records"));
    }
    let start = history.records.len().saturating_sub(args.window.max(1));
    let window = &history.records[start..];

    let mut sigmas = Vec::new();
    let mut sigmas_clean = Vec::new();
    let mut sigmas_noisy = Vec::new();
    let mut losses = Vec::new();
    let mut losses_clean = Vec::new();
    let mut losses_noisy = Vec::new();
    for record in window {
        for ((&sigma, &loss), &corrupted) in record
            .sigmas
            .iter()
            .zip(&record.proxy_losses)
            .zip(&record.corrupted)
        {
            sigmas.push(sigma);
            losses.push(loss);
            if corrupted {
                sigmas_noisy.push(sigma);
                losses_noisy.push(loss);
            } else {
                sigmas_clean.push(sigma);
                losses_clean.push(loss);
            }
        }
    }

    ensure_out_dir(&args.out_dir)?;
    let mut written = vec![
        ("sigma_hist.csv", &sigmas),
        ("proxy_loss_hist.csv", &losses),
    ];
    if !sigmas_noisy.is_empty() {
        written.push(("sigma_clean_hist.csv", &sigmas_clean));
        written.push(("sigma_noisy_hist.csv", &sigmas_noisy));
        written.push(("proxy_loss_clean_hist.csv", &losses_clean));
        written.push(("proxy_loss_noisy_hist.csv", &losses_noisy));
    }
    for (name, values) in written {
        let path = args.out_dir.join(name);
        export_histogram(values, args.bins, &path)?;
        manifest.add_output(&path)?;
    }
    manifest.write(&args.out_dir)?;

    println!(
        "analyze-confidence: {} samples over the last {} iterations ({} corrupted) -> {}",
        sigmas.len(),
        window.len(),
        sigmas_noisy.len(),
        args.out_dir.display()
    );
    Ok(())
}
