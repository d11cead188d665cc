use std::path::PathBuf;
use std::process::ExitCode;

use afc_lab::commands::{self, Dataset, Options, Outcome, Target};
use clap::{Args, Parser, Subcommand};

/// Simulated multiplexed quantum memory for time-bin entangled photons.
#[derive(Parser)]
#[command(name = "afc-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full simulated acquisition and write a report.
    Simulate(Common),
    /// Analyze one of the published tables shipped as fixtures.
    AnalyzeGolden {
        #[arg(value_enum)]
        dataset: Dataset,
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate the data behind one figure or table.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults to the shipped calibrated config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated channel numbers, from 1.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<usize>,
    /// Monte-Carlo trials for error bars.
    #[arg(long)]
    trials: Option<usize>,
    /// Directory with fixture CSVs to use instead of the embedded copies.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options {
            config: c.config,
            out: c.out,
            seed: c.seed,
            channels: c.channels,
            trials: c.trials,
            fixtures: c.fixtures,
        }
    }
}

fn report(outcome: &Outcome) -> ExitCode {
    for c in &outcome.checks {
        println!("{}", c.line());
    }
    println!(
        "{}: {} ({} files in output)",
        outcome.command,
        if outcome.passed { "pass" } else { "tolerance failure" },
        outcome.files.len()
    );
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => commands::simulate(&c.into()),
        Command::AnalyzeGolden { dataset, common } => commands::analyze_golden(dataset, &common.into()),
        Command::Reproduce { target, common } => commands::reproduce(target, &common.into()),
    };
    match result {
        Ok(outcome) => report(&outcome),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
