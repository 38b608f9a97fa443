use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

/// Simulate, fit and evaluate multi-cascade popularity models with revisits.
#[derive(Debug, Parser)]
#[command(name = "phoenix", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for batch commands.
    #[arg(long, global = true, env = "PHOENIX_JOBS", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,
    /// Output encoding where a command offers both; inferred from the
    /// output file extension when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a model forward and write its popularity series.
    Simulate(commands::SimulateArgs),
    /// Detect peaks and candidate shock starts in a series.
    Peaks(commands::PeaksArgs),
    /// Fit a series and select the number of shocks.
    Fit(commands::FitArgs),
    /// Fit every series listed in a file.
    FitBatch(commands::FitBatchArgs),
    /// Revisit/audience statistics of an event log.
    Characterize(commands::CharacterizeArgs),
    /// Compare forecasting accuracy against smoothing baselines.
    Evaluate(commands::EvaluateArgs),
    /// Draw a noisy series from a known model.
    GenSynthetic(commands::GenSyntheticArgs),
}

pub fn out_path_format(path: Option<&PathBuf>, explicit: Option<Format>, default: Format) -> Format {
    explicit.unwrap_or_else(|| match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
        Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => default,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.global.log_level.filter())
        .parse_default_env()
        .init();

    let g = &cli.global;
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(g, a),
        Command::Peaks(a) => commands::peaks(g, a),
        Command::Fit(a) => commands::fit(g, a),
        Command::FitBatch(a) => commands::fit_batch(g, a),
        Command::Characterize(a) => commands::characterize(g, a),
        Command::Evaluate(a) => commands::evaluate(g, a),
        Command::GenSynthetic(a) => commands::gen_synthetic(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
