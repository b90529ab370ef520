//! Command-line arguments. Every flag can also be set through an `AIF_ROUTER_*`
//! environment variable; an explicit flag wins over the environment.

use std::net::SocketAddr;
use std::path::PathBuf;

use aif_router::harness::Strategy;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aif-router", version, about = "Active-inference request router")]
pub struct Cli {
    /// Log filter, e.g. `info` or `aif_router_cli=debug`.
    #[arg(long, global = true, env = "AIF_ROUTER_LOG", default_value = "info")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulated experiment and write reports.
    Run(RunArgs),
    /// Recompute reports from a raw outcome log.
    Replay(ReplayArgs),
    /// Route live HTTP traffic across three tier endpoints.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment spec (TOML).
    #[arg(env = "AIF_ROUTER_SPEC")]
    pub spec: PathBuf,

    /// Output directory for the CSV, summary, outcome log and traces.
    #[arg(short, long, env = "AIF_ROUTER_OUT", default_value = "results")]
    pub out: PathBuf,

    /// Simulated seconds per run.
    #[arg(long, env = "AIF_ROUTER_DURATION_S")]
    pub duration_s: Option<f64>,

    /// Comma-separated run seeds; also sets the run count unless `--runs` is given.
    #[arg(long, env = "AIF_ROUTER_SEEDS", value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,

    /// Runs per strategy.
    #[arg(long, env = "AIF_ROUTER_RUNS")]
    pub runs: Option<usize>,

    /// Comma-separated strategies to run (`aif`, `baseline`).
    #[arg(long, env = "AIF_ROUTER_STRATEGY", value_delimiter = ',')]
    pub strategy: Option<Vec<Strategy>>,

    /// Run simulations on separate threads.
    #[arg(long, env = "AIF_ROUTER_PARALLEL")]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Outcome log written by `run` (`outcomes.jsonl`).
    #[arg(env = "AIF_ROUTER_OUTCOME_LOG")]
    pub log_file: PathBuf,

    /// Write `report.csv` and `summary.txt` here; otherwise print the summary only.
    #[arg(short, long, env = "AIF_ROUTER_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Serve configuration (TOML).
    #[arg(short, long, env = "AIF_ROUTER_CONFIG")]
    pub config: Option<PathBuf>,

    #[arg(long, env = "AIF_ROUTER_LISTEN")]
    pub listen: Option<SocketAddr>,

    /// Per-request backend timeout.
    #[arg(long, env = "AIF_ROUTER_TIMEOUT_MS")]
    pub timeout_ms: Option<f64>,

    #[arg(long, env = "AIF_ROUTER_LIGHT_URL")]
    pub light_url: Option<String>,

    #[arg(long, env = "AIF_ROUTER_MEDIUM_URL")]
    pub medium_url: Option<String>,

    #[arg(long, env = "AIF_ROUTER_HEAVY_URL")]
    pub heavy_url: Option<String>,

    /// Metrics endpoint returning `{"light":..,"medium":..,"heavy":..}` CPU fractions.
    #[arg(long, env = "AIF_ROUTER_UTILIZATION_URL")]
    pub utilization_url: Option<String>,

    /// Append the decision trace (JSON lines) to this file.
    #[arg(long, env = "AIF_ROUTER_TRACE")]
    pub trace: Option<PathBuf>,

    /// Start from a previously saved model instead of the uninformed prior.
    #[arg(long, env = "AIF_ROUTER_LOAD_MODEL")]
    pub load_model: Option<PathBuf>,

    /// Save the learned model here on shutdown.
    #[arg(long, env = "AIF_ROUTER_SAVE_MODEL")]
    pub save_model: Option<PathBuf>,

    /// Engine random seed.
    #[arg(long, env = "AIF_ROUTER_SEED")]
    pub seed: Option<u64>,
}
