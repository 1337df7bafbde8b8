mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] workpulse::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "workpulse", version, about = "Detect and analyze job-related short messages")]
pub struct Cli {
    /// Key-value configuration file (`key = value` per line).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// IANA time zone for local-time analytics.
    #[arg(long, global = true)]
    pub zone: Option<String>,
    /// Directory holding annotation projects and service state.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a JSONL message file and write the accepted records.
    Ingest(commands::IngestArgs),
    /// Keep Job-Likely messages.
    Filter(commands::FilterArgs),
    /// Build annotation batches with duplicate probes and register a project.
    Batch(commands::BatchArgs),
    /// Serve the labeling API.
    Serve(commands::ServeArgs),
    /// Synthetic corpus generation and simulated annotation.
    #[command(subcommand)]
    Simulate(commands::SimulateCommand),
    /// Tally crowd labels into agreement tiers.
    Aggregate(commands::AggregateArgs),
    /// Combine unanimous crowd labels with expert decisions.
    Gold(commands::GoldArgs),
    /// Grid-search and train the linear classifier.
    Train(commands::TrainArgs),
    /// Score messages with a trained model.
    Classify(commands::ClassifyArgs),
    /// Draw Type-1 and Type-2 samples from scores.
    Sample(commands::SampleArgs),
    /// Precision, recall and F1 against known labels.
    Evaluate(commands::EvaluateArgs),
    /// Fit a topic model over per-account documents.
    Topics(commands::TopicsArgs),
    /// Weekday-by-hour affect matrix.
    Affect(commands::AffectArgs),
    /// Message volume by month, weekday or hour.
    Timeseries(commands::TimeseriesArgs),
    /// Separate individual and commercial accounts.
    Accounts(commands::AccountsArgs),
    /// Lexical statistics, per account group when accounts are given.
    Stats(commands::StatsArgs),
    /// Kendall rank correlation between two scorings.
    Kendall(commands::KendallArgs),
    /// Compare normalized POS tag profiles of two groups.
    Pos(commands::PosArgs),
    /// Run one round of the labeling loop.
    Round(commands::RoundArgs),
    /// Assemble the report bundle from finished rounds.
    Export(commands::ExportArgs),
}

/// Settings resolved from flags, the config file and defaults, in that order.
pub struct Globals {
    pub config: Config,
    pub seed: u64,
    pub zone: workpulse::analytics::Zone,
    pub data_dir: PathBuf,
}

impl Globals {
    fn resolve(cli: &Cli) -> CliResult<Self> {
        let config = match &cli.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let seed = match cli.seed {
            Some(s) => s,
            None => config.get("seed")?.unwrap_or(0),
        };
        let zone = match cli.zone.clone().or(config.get::<String>("zone")?) {
            Some(z) => z.parse().map_err(|e: workpulse::Error| CliError::Usage(e.to_string()))?,
            None => workpulse::analytics::Zone::default(),
        };
        let data_dir = cli
            .data_dir
            .clone()
            .or_else(|| config.path("data_dir"))
            .unwrap_or_else(|| PathBuf::from("workpulse-data"));
        Ok(Globals {
            config,
            seed,
            zone,
            data_dir,
        })
    }
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Output file.
    #[arg(short, long)]
    pub output: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = Globals::resolve(&cli).and_then(|g| commands::run(cli.command, &g));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut message = e.to_string();
            eprintln!("error: {message}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let next = s.to_string();
                if !message.contains(&next) {
                    eprintln!("  caused by: {next}");
                }
                message = next;
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
