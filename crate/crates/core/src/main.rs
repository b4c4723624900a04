use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use factorcast::config::RunConfig;
use factorcast::consistency::SimilarityStats;
use factorcast::pipeline::{self, PipelineError, Run, Stage};

#[derive(Parser)]
#[command(
    name = "factorcast",
    version,
    about = "Factor-scored next-day index forecasts and backtests"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "factorcast.json")]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use only the response cache and mock backends.
    #[arg(long, global = true)]
    offline: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forecast a single date and write its audit bundle.
    Forecast {
        #[arg(long)]
        date: NaiveDate,
        #[arg(long, default_value_t = 0)]
        lookback: u32,
    },
    /// Walk forward over the configured date range and look-backs.
    Backtest,
    /// Trial similarity and score correlation over a finished backtest.
    Consistency,
    /// Recompute the evaluation summary from stored predictions.
    Eval,
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Forecast { date, lookback } => {
            let run = Run::open(cfg, cli.offline)?;
            let outcome = pipeline::run_forecast(&run, *date, *lookback)?;
            print!("{}", pipeline::render_forecast(&outcome));
        }
        Command::Backtest => {
            let run = Run::open(cfg, cli.offline)?;
            let report = pipeline::run_backtest(&run)?;
            println!(
                "backtest: {} forecasts, {} baseline predictions -> {}",
                report.records.len(),
                report.baselines.len(),
                run.output_dir().display()
            );
            print!("{}", report.summary.to_csv());
        }
        Command::Consistency => {
            let report = pipeline::run_consistency(&cfg)?;
            println!("consistency (look-back {}):", report.lookback);
            print!("{}", SimilarityStats::to_csv(std::slice::from_ref(&report.similarity)));
            print!("{}", report.correlation.to_csv());
        }
        Command::Eval => {
            let summary = pipeline::run_eval(&cfg)?;
            print!("{}", summary.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.stage() == Stage::Config {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
