use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stagewise_cli::commands::{self, Overrides};
use stagewise_cli::{CliError, RunConfig};

/// Monte Carlo Tree Search over staged machine-learning pipelines.
#[derive(Parser)]
#[command(name = "stagewise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the insight search space and write it to the output directory.
    Propose {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a search from scratch.
    Search {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of rollouts (k).
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Continue a journaled search until the configured number of rollouts.
    Resume {
        #[command(flatten)]
        run: RunArgs,
        /// Journal to resume; defaults to the one in the output directory.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Rank methods from a CSV of raw scores (method,dataset,run,metric,raw_score).
    Report {
        scores: PathBuf,
        /// Method that wins, losses and rescaled scores are measured against.
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Compare MCTS with random configuration sampling on synthetic landscapes.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Inspect or empty the stage-code cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    List {
        #[arg(long)]
        config: PathBuf,
    },
    Clear {
        #[arg(long)]
        config: PathBuf,
    },
}

fn overrides(run: &RunArgs, seed: Option<u64>, rollouts: Option<usize>) -> Overrides {
    Overrides { seed, rollouts, output_dir: run.output_dir.clone() }
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Propose { run } => commands::propose(RunConfig::load(&run.config)?, &overrides(&run, None, None)),
        Command::Search { run, seed, rollouts } => {
            commands::search(RunConfig::load(&run.config)?, &overrides(&run, seed, rollouts))
        }
        Command::Resume { run, journal, rollouts } => {
            commands::resume(RunConfig::load(&run.config)?, &overrides(&run, None, rollouts), journal.as_deref())
        }
        Command::Report { scores, reference, output_dir } => {
            commands::report(&scores, reference.as_deref(), &output_dir)
        }
        Command::Ablation { run, trials, seed, rollouts } => {
            commands::ablation(RunConfig::load(&run.config)?, &overrides(&run, seed, rollouts), trials)
        }
        Command::Cache { action: CacheAction::List { config } } => commands::cache_list(&RunConfig::load(&config)?),
        Command::Cache { action: CacheAction::Clear { config } } => commands::cache_clear(&RunConfig::load(&config)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
