use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use spinfk_cli::config::parse_config;
use spinfk_cli::runner::{error_json, run, Overrides, RunError, Subcommand};

/// Feynman-Kac Monte Carlo and exact-diagonalization experiments for the
/// renormalized spin-boson model.
#[derive(Debug, Parser)]
#[command(name = "spinfk", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `[run] out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per estimate.
    #[arg(long)]
    n: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    workers: Option<usize>,
}

fn fail(cli: &Cli, out: Option<PathBuf>, kind: &str, message: &str, digest: Option<&str>) -> ExitCode {
    let doc = error_json(Some(cli.subcommand), kind, message, digest);
    let body = serde_json::to_string_pretty(&doc).unwrap_or_else(|_| message.to_string());
    eprintln!("{body}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), body + "\n");
        }
    }
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail(&cli, cli.out.clone(), "config", &e.to_string(), None),
    };
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        n: cli.n,
        workers: cli.workers,
    };
    let out_dir = overrides.out.clone().unwrap_or_else(|| cfg.run.out.clone());
    match run(&cfg, cli.subcommand, &overrides) {
        Ok(report) => {
            println!("{}: {} rows -> {}", cli.subcommand, report.rows, report.csv.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            let kind = e.kind();
            let _ = fail(&cli, Some(out_dir), kind, &e.to_string(), Some(&cfg.digest));
            if matches!(e, RunError::Contract(_)) {
                eprintln!("outputs were written; see run.log");
            }
            ExitCode::from(code as u8)
        }
    }
}
