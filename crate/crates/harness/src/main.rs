use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use emlmc::{Experiment, ExperimentConfig};

/// Embedded multilevel Monte Carlo experiments on random domains.
#[derive(Debug, Parser)]
#[command(name = "emlmc", version)]
struct Cli {
    /// Experiment configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the CSV files and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the configuration.
    #[arg(long)]
    threads: Option<usize>,
    /// Experiment name, overriding the configuration.
    #[arg(long)]
    experiment: Option<Experiment>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut config = ExperimentConfig::load(&cli.config).map_err(|e| e.to_string())?;
    if let Some(experiment) = cli.experiment {
        if experiment != config.experiment {
            // Re-read so the defaults of the overriding experiment apply.
            let text = std::fs::read_to_string(&cli.config).map_err(|e| e.to_string())?;
            let text: String = text
                .lines()
                .filter(|l| l.split('#').next().unwrap().split('=').next().unwrap().trim() != "experiment")
                .map(|l| format!("{l}\n"))
                .collect();
            config = ExperimentConfig::parse(&format!("experiment = {}\n{text}", experiment.name()))
                .map_err(|e| e.to_string())?;
        }
    }
    if let Some(seed) = cli.seed {
        config.root_seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("emlmc: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = emlmc::run(&config, &cli.out) {
        eprintln!("emlmc: {e}");
        return ExitCode::FAILURE;
    }
    println!(
        "emlmc: {} finished, results in {}",
        config.experiment.name(),
        cli.out.display()
    );
    ExitCode::SUCCESS
}
