//! Command-line front end: config loading, the calibration pipeline and the
//! synthetic coverage / consistency experiments.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{LoadedConfig, RunConfig};
pub use error::CliError;
pub use report::ExperimentReport;

#[derive(Debug, Parser)]
#[command(name = "simgap", version, about = "Posterior confidence bounds for simulation model discrepancy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for batch loops (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Bound every configured functional on the configured data.
    Calibrate,
    /// Coverage frequency of the bounds on synthetic data.
    Coverage,
    /// Slope, shrinkage and ranking statistics over an n-ladder.
    Consistency,
    /// Generate a count dataset from the queue or multinomial generators.
    Simulate,
    /// Optimization bounds next to posterior sampler quantiles.
    CompareSampler,
    /// Posterior mode only.
    Mode,
    /// Midpoint-convexity probe of the level set.
    ConvexityCheck,
}

/// Runs one command. The returned exit code is 0 when every record is optimal or an explicit failure.
pub fn run(cli: &Cli) -> Result<(ExperimentReport, i32), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = LoadedConfig::load(path)?;
    let ctx = commands::Context::new(&cfg, cli.seed, cli.out.clone(), cli.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Threads(e.to_string()))?;
    let report = pool.install(|| match cli.command {
        Command::Calibrate => commands::calibrate(&cfg, &ctx),
        Command::Coverage => commands::coverage(&cfg, &ctx),
        Command::Consistency => commands::consistency(&cfg, &ctx),
        Command::Simulate => commands::simulate(&cfg, &ctx),
        Command::CompareSampler => commands::compare_sampler(&cfg, &ctx),
        Command::Mode => commands::mode(&cfg, &ctx),
        Command::ConvexityCheck => commands::convexity_check(&cfg, &ctx),
    })?;
    let code = if report.all_terminal() { 0 } else { 2 };
    Ok((report, code))
}
