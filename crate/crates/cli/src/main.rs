use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use encvar_cli::{configure_threads, run, simulate, Overrides, RunConfig, Stage};
use encvar_core::var_models::ModelKind;

/// Encoded VaR: VAE scenario generation, benchmark VaR models, backtests
/// and random-matrix diagnostics.
#[derive(Parser)]
#[command(name = "encvar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load prices, compute returns, rolling statistics and the split.
    Prepare(RunArgs),
    /// Train the variational auto-encoder.
    Train(RunArgs),
    /// Produce VaR series for every requested model and level.
    Forecast(RunArgs),
    /// Score the forecasts with the backtest losses.
    Backtest(RunArgs),
    /// Random-matrix diagnostics of real and generated panels.
    Rmt(RunArgs),
    /// Run every stage in order.
    All(RunArgs),
    /// Write a synthetic one-factor price CSV.
    Simulate(SimArgs),
    /// Print the default configuration as JSON.
    DefaultConfig,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Price CSV.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// VaR level; repeat for several.
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    /// Comma-separated model tags.
    #[arg(long, value_delimiter = ',')]
    models: Vec<ModelKind>,
    /// Master seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 100)]
    assets: usize,
    #[arg(long, default_value_t = 3000)]
    days: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Destination CSV.
    #[arg(long)]
    out: PathBuf,
}

fn load_config(args: RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        prices: args.prices,
        out_dir: args.out,
        alphas: args.alphas,
        models: args.models,
        seed: args.seed,
    });
    Ok(cfg)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let (stage, args) = match cli.command {
        Command::Prepare(a) => (Stage::Prepare, a),
        Command::Train(a) => (Stage::Train, a),
        Command::Forecast(a) => (Stage::Forecast, a),
        Command::Backtest(a) => (Stage::Backtest, a),
        Command::Rmt(a) => (Stage::Rmt, a),
        Command::All(a) => (Stage::All, a),
        Command::Simulate(a) => return simulate(a.assets, a.days, a.seed, &a.out),
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&RunConfig::default())?);
            return Ok(());
        }
    };
    let cfg = load_config(args)?;
    let written = run(stage, &cfg)?;
    log::info!("{} wrote {} file(s) under {}", stage.name(), written.len(), cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
