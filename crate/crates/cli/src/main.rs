mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;

#[derive(Parser)]
#[command(name = "elnn", version, about = "Exponential Lévy models: virtual markets, calibration and plot data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a noisy virtual option market from a model.
    Simulate(SimulateArgs),
    /// Fit the ELNN or a parametric model to a market.
    Calibrate(CalibrateArgs),
    /// Lévy density curve of fitted parameters or a model.
    Density(DensityArgs),
    /// Moments of log-returns against the time horizon.
    Moments(MomentsArgs),
    /// Merge calibration runs into error and stability tables.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model JSON document.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub per_day: Option<usize>,
    /// Maturity in years.
    #[arg(long)]
    pub maturity: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// Proportional noise level.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Market directory written by `simulate`.
    #[arg(long)]
    pub market: Option<PathBuf>,
    /// Quote CSV to ingest instead of a market directory.
    #[arg(long)]
    pub quotes: Option<PathBuf>,
    /// Risk-free rate applied to ingested quotes.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Keep only quotes with this many business days to expiry.
    #[arg(long)]
    pub maturity_days: Option<i64>,
    /// elnn, merton or kou.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub m_cutoff: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub amplify_seed: Option<u64>,
    /// Simplex evaluations per restart for parametric fits.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `params.json` written by `calibrate`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Model JSON document.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Half-width of the x range.
    #[arg(long)]
    pub x_window: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct MomentsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV with a `price` column.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// Model JSON; simulated when no prices are given, and the theory column otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Step length in years.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated horizons in steps.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directories of `calibrate` runs.
    #[arg(long, num_args = 1..)]
    pub runs: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub x_window: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ELNN_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("ELNN_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Density(a) => commands::density(a),
        Command::Moments(a) => commands::moments(a),
        Command::Report(a) => commands::report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
