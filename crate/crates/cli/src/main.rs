use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracwick::experiment::{self, ExperimentConfig};
use fracwick::Error;

/// Wick–Wong–Zakai fBm SDE experiments.
#[derive(Parser)]
#[command(name = "fracwick", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses enabled in a config and write CSVs + manifest.json.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "fracwick-out")]
        out: PathBuf,
        /// Worker threads (overrides the config).
        #[arg(long)]
        workers: Option<usize>,
        /// RNG seed (overrides FRACWICK_SEED and the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-form and degenerate-input checks.
    Selftest,
    /// Dump the orthonormal basis and Gram diagnostics.
    Basis {
        config: PathBuf,
        #[arg(long, default_value = "fracwick-out")]
        out: PathBuf,
        /// Basis size (default: largest non-exact rung of the ladder).
        #[arg(long)]
        k: Option<usize>,
    },
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Config { .. } | Error::ExponentInconsistency { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed,
        } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let outcome = match experiment::run(&cfg, &out, workers, seed) {
                Ok(o) => o,
                Err(e) => return fail(e),
            };
            println!(
                "config {} seed {} -> {}",
                &outcome.manifest.config_hash[..12],
                outcome.manifest.seed,
                out.display()
            );
            for g in &outcome.gates {
                println!("{} {}: {}", if g.pass { "ok  " } else { "FAIL" }, g.name, g.detail);
            }
            let failed: Vec<_> = outcome.failures().map(|g| g.name.as_str()).collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed gates: {}", failed.join(", "));
                ExitCode::from(1)
            }
        }
        Command::Selftest => {
            let cases = experiment::selftest();
            let mut failed = Vec::new();
            for c in &cases {
                match &c.outcome {
                    Ok(()) => println!("ok   {}", c.name),
                    Err(msg) => {
                        println!("FAIL {}: {msg}", c.name);
                        failed.push(c.name);
                    }
                }
            }
            if failed.is_empty() {
                println!("{} checks passed", cases.len());
                ExitCode::SUCCESS
            } else {
                eprintln!("failed: {}", failed.join(", "));
                ExitCode::from(1)
            }
        }
        Command::Basis { config, out, k } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match experiment::dump_basis(&cfg, k, &out) {
                Ok(info) => {
                    println!("{info:#}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}

