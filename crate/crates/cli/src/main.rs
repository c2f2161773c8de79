//! `raidscan`: detects bear-raid candidates in daily market data.
//!
//! Subcommands: `synth` (generate seeded series with planted raids),
//! `fit` (tail-distribution fits and CDF overlays), `scan` (anomaly and
//! raid-candidate report), `screen-ban` (reporting-lag alignment).
//!
//! Exit codes: 0 success, 1 input or validation error, 2 internal
//! error. Analytic findings never affect the exit code.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "raidscan", version, about = "Short-interest anomaly and bear-raid candidate scanner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the R and Q tail distributions and export CDF overlays
    Fit(CommonArgs),
    /// Scan for anomalies and paired raid candidates
    Scan(CommonArgs),
    /// Align borrowing activity against a short-sale-ban window
    ScreenBan {
        #[command(flatten)]
        common: CommonArgs,
        /// First trading day of the ban (YYYY-MM-DD)
        #[arg(long)]
        ban_start: NaiveDate,
        /// Last trading day of the ban (YYYY-MM-DD)
        #[arg(long)]
        ban_end: NaiveDate,
    },
    /// Generate a synthetic series and its ground-truth record
    Synth(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price CSV (date,high,low,close,volume,dividend)
    #[arg(long)]
    price: Option<PathBuf>,
    /// Short-interest CSV (date,total_short_interest,delta_short_interest)
    #[arg(long)]
    short: Option<PathBuf>,
    /// Output directory (default: out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the generator seed in synth mode
    #[arg(long)]
    seed: Option<u64>,
    /// Opening-spike threshold on R
    #[arg(long)]
    r_open_min: Option<f64>,
    /// Opening-spike threshold on Q
    #[arg(long)]
    q_min: Option<f64>,
    /// Trading days a cover may trail its open
    #[arg(long)]
    pairing_window: Option<usize>,
    /// Quantile of positive samples used as the power-law threshold
    #[arg(long)]
    x_min_quantile: Option<f64>,
    /// Comma-separated dates excluded from tail fits
    #[arg(long, value_delimiter = ',')]
    exclude_dates: Option<Vec<NaiveDate>>,
}

/// Input/validation failures exit 1; anything else is internal (2).
pub enum CliError {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Internal(e)
    }
}

pub fn input_error(msg: String) -> CliError {
    CliError::Input(anyhow::anyhow!(msg))
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let base = match &args.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Input)?,
        None => RunConfig::default(),
    };
    Ok(base.merged(args))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(args) => {
            let config = load_config(&args)?;
            commands::cmd_fit(&config, args.seed)
        }
        Command::Scan(args) => {
            let config = load_config(&args)?;
            commands::cmd_scan(&config, args.seed)
        }
        Command::ScreenBan { common, ban_start, ban_end } => {
            if ban_end < ban_start {
                return Err(input_error("ban_end precedes ban_start".to_string()));
            }
            let config = load_config(&common)?;
            commands::cmd_screen_ban(&config, common.seed, ban_start, ban_end)
        }
        Command::Synth(args) => {
            let config = load_config(&args)?;
            commands::cmd_synth(&config, args.seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
