//! `procsim`: synthesize benchmark data, build taxonomies, inject label
//! noise, train confidence-aware embedders, and evaluate them.

mod commands;
mod manifest;
mod util;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use procsim_core::Error;

#[derive(Parser)]
#[command(
    name = "procsim",
    version,
    about = "Confidence-aware similarity learning under label noise",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic hierarchical benchmark (train/test splits,
    /// taxonomy, semantic table).
    Synth(commands::synth::SynthArgs),
    /// Build a class taxonomy from a hypernym graph.
    BuildTaxonomy(commands::taxonomy::BuildTaxonomyArgs),
    /// Corrupt dataset labels under a noise model and emit a manifest.
    InjectNoise(commands::noise::InjectNoiseArgs),
    /// Train an embedder with per-sample confidences.
    Train(commands::train::TrainArgs),
    /// Evaluate retrieval (and optionally noise identification) for a
    /// checkpoint.
    Eval(commands::eval::EvalArgs),
    /// Run the threshold-strategy × noise-model × probability grid.
    Ablate(commands::ablate::AblateArgs),
    /// Export confidence and proxy-loss histograms from a training history.
    AnalyzeConfidence(commands::confidence::AnalyzeConfidenceArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::BuildTaxonomy(args) => commands::taxonomy::run(args),
        Command::InjectNoise(args) => commands::noise::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Ablate(args) => commands::ablate::run(args),
        Command::AnalyzeConfidence(args) => commands::confidence::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// 1 for validation problems, 2 for runtime failures.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::TrainingAborted { .. } => 2,
        _ => 1,
    }
}
