use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use eaq_cli::{load_config, run, Subcommand};

/// Simulation and limit theorems for the entanglement-assisted two-queue
/// model.
#[derive(Debug, Parser)]
#[command(name = "eaq", version)]
struct Args {
    /// simulate | fluid | fclt | validate | sweep
    #[arg(value_enum)]
    command: Subcommand,

    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for replications. Never changes results.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match try_main(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("validation failed: see report.csv");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main(args: &Args) -> anyhow::Result<bool> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("configuring worker threads")?;
    }
    let (cfg, text) = load_config(&args.config)?;
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    let outcome = run(args.command, &cfg, &text, &dir)?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.passed)
}
