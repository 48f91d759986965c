use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quantformer::cli::{format_table1, replicate_table1, run, Stage};

#[derive(Parser)]
#[command(name = "quantformer", version, about = "Train and backtest a quantformer stock-ranking model")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate daily bars into the period store.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic daily-bar market.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a model and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the strategy and benchmark over the test periods.
    Backtest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute metrics and plot the equity curves.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print sample and section counts for a set of strategy configs.
    Table1 {
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = match args.command {
        Command::Ingest { config } => run(Stage::Ingest, &config),
        Command::Synth { config } => run(Stage::Synth, &config),
        Command::Train { config } => run(Stage::Train, &config),
        Command::Backtest { config } => run(Stage::Backtest, &config),
        Command::Report { config } => run(Stage::Report, &config),
        Command::Table1 { config } => {
            let paths: Vec<&std::path::Path> = config.iter().map(PathBuf::as_path).collect();
            replicate_table1(&paths).map(|rows| print!("{}", format_table1(&rows)))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
