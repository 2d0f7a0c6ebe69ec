use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fedguard_core::harness::{self, ExperimentConfig};
use fedguard_core::Error;

/// Federated averaging simulator with Laplace poisoning and a clustering defense.
#[derive(Debug, Parser)]
#[command(name = "fedguard", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, summary.json and config_resolved.toml.
    Run {
        /// TOML experiment config. Layered over --preset when both are given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(harness::PRESETS))]
        preset: Option<String>,
        #[arg(long)]
        defense: Option<Toggle>,
        /// Overrides master_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and range-check a config, then print it fully defaulted.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(
    config: Option<&Path>,
    preset: Option<&str>,
    defense: Option<Toggle>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, Error> {
    let text = config.map(read).transpose()?;
    if text.is_none() && preset.is_none() {
        return Err(Error::Config {
            field: "<root>".into(),
            message: "either --config or --preset is required".into(),
        });
    }
    let mut cfg = harness::resolve(preset, text.as_deref())?;
    if let Some(t) = defense {
        cfg.defense.enabled = matches!(t, Toggle::On);
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            preset,
            defense,
            seed,
        } => {
            let cfg = load(config.as_deref(), preset.as_deref(), defense, seed)?;
            let trace = harness::run_experiment(&cfg, &out)?;
            let last = trace.final_metrics();
            println!(
                "rounds={} converged={} accuracy={:.4} loss={:.4} out={}",
                trace.rows.len(),
                trace.converged,
                last.accuracy,
                last.loss,
                out.display()
            );
            if let Some(ledger) = &trace.ledger {
                for (client, round) in &ledger.elimination_round {
                    println!("eliminated client {client} at round {round}");
                }
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = harness::validate_config(&read(&config)?)?;
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
