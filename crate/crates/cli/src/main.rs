use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fsal_cli::{cmd_gap_chart, cmd_plot, cmd_run, parse_config, resolved_toml, RunOptions};

#[derive(Parser)]
#[command(
    name = "fsal",
    version,
    about = "Active-learning experiments on fingerspelling corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write manifest, result JSON and CSV.
    Run {
        config: PathBuf,
        /// Parent directory of the per-run output directory.
        #[arg(short, long, default_value = "runs")]
        out: PathBuf,
        /// Overwrite an existing output directory.
        #[arg(long)]
        force: bool,
        /// Replace the config's seeds (comma separated).
        #[arg(long, value_delimiter = ',')]
        seed_override: Option<Vec<u64>>,
        /// Fail on unknown letter directories and undecodable images.
        #[arg(long)]
        strict_ingest: bool,
    },
    /// Plot learning curves of one or more results.
    Plot {
        /// Result JSON files or run directories.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-letter accuracy and gap chart at one round.
    GapChart {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(short, long)]
        round: usize,
        /// File listing the letters shared with the pre-training corpus.
        #[arg(long)]
        shared: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check a config and print it with all defaults filled in.
    ValidateConfig { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            force,
            seed_override,
            strict_ingest,
        } => {
            let opts = RunOptions {
                force,
                seed_override,
                strict_ingest,
            };
            let dir = cmd_run(&config, &out, &opts)
                .with_context(|| format!("running {}", config.display()))?;
            println!("{}", dir.display());
        }
        Command::Plot { results, output } => cmd_plot(&results, &output)?,
        Command::GapChart {
            results,
            round,
            shared,
            output,
        } => cmd_gap_chart(&results, round, shared.as_deref(), &output)?,
        Command::ValidateConfig { config } => {
            let parsed = parse_config(&config)?;
            print!("{}", resolved_toml(&parsed)?);
        }
    }
    Ok(())
}
