mod commands;
mod config;
mod output;

use clap::Parser;
use commands::{Context, Failure};
use std::path::PathBuf;
use std::process::ExitCode;

/// Normal-mode tables, coupling scans, cooling runs, spectra and fits.
#[derive(Parser)]
#[command(name = "modecool", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file (CSV or JSON depending on the command).
    #[arg(long)]
    out: PathBuf,
    /// Seed for noise and fit restarts; overrides "seed" in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotConverged) => {
            eprintln!("error: fit did not converge; best result written with converged=false");
            ExitCode::from(3)
        }
        Err(Failure::Invalid(lines)) => {
            for l in lines {
                eprintln!("error: {l}");
            }
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<(), Failure> {
    let bytes = std::fs::read(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let cfg: config::RunConfig = serde_json::from_slice(&bytes)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let seed = args.seed.or(cfg.seed);
    let base_dir = args
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context {
        meta: output::Meta::new(&bytes, seed),
        seed,
        out: args.out.clone(),
        base_dir,
    };
    commands::run(&cfg, &ctx)
}
