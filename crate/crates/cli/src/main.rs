//! `ruelle` — experiment runner for the transfer-operator laboratory.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ruelle_core::experiment::{self, ExperimentConfig, EXPERIMENT_KINDS};

#[derive(Parser)]
#[command(name = "ruelle", version, about = "Transfer operators, dynamical determinants, and dyadic norm experiments on torus maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML (or JSON) config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for summary.json and the CSV tables.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the random seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: RUELLE_THREADS or machine parallelism).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the available experiment kinds.
    List,
    /// Print the config schema for one experiment kind.
    Schema {
        /// Experiment kind.
        kind: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(cli: Cli) -> ruelle_core::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let outcome = experiment::run(&cfg, &out, threads)?;
            println!(
                "wrote {} (config hash {})",
                outcome.summary_path.display(),
                outcome.config_hash
            );
            Ok(())
        }
        Command::List => {
            for (kind, doc) in EXPERIMENT_KINDS {
                println!("{kind:<20} {doc}");
            }
            Ok(())
        }
        Command::Schema { kind } => {
            let schema = experiment::emit_schema(&kind)?;
            println!("{}", schema.render());
            Ok(())
        }
    }
}
