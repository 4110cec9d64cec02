//! `sssir`: fit the state-space SIR model, forecast intervention scenarios
//! and assemble reports.

mod commands;
mod config;
mod output;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{parse_scenario, Profile, RunConfig};

#[derive(Parser)]
#[command(name = "sssir", version, about = "State-space SIR epidemic model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Case-count CSV path or http(s) URL; defaults to the bundled snapshot.
    #[arg(long, global = true)]
    pub data: Option<String>,
    /// Never touch the network; URL sources fall back to the bundled snapshot.
    #[arg(long, global = true)]
    pub offline: bool,
    /// Identification rate.
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    /// Post-burn-in iterations per chain.
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    #[arg(long, global = true)]
    pub thin: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Forecast horizon in days.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Forecast from at most this many evenly spaced posterior draws.
    #[arg(long, global = true)]
    pub max_draws: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Use the published regression coefficients instead of regenerating them.
    #[arg(long, global = true)]
    pub published_coefficients: bool,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the posterior sampler and write draws, traces and the summary table.
    Fit,
    /// Forecast one or more scenarios from the fitted draws.
    Forecast {
        /// `c,cstar,tstar`; repeatable. Without it, the no-intervention forecast.
        #[arg(long)]
        scenario: Vec<String>,
        /// Draws file; defaults to `<out>/draws.json`.
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Forecast the default scenario grid.
    Sweep {
        /// Add T* = 75 to the grid.
        #[arg(long)]
        extended: bool,
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Prior predictive bands against the observations.
    PriorCheck {
        #[arg(long, default_value_t = 2000)]
        n_draws: usize,
    },
    /// Assemble the outputs in `--out` into Markdown and/or HTML.
    Report {
        #[arg(long, value_enum, default_value_t = report::Format::Both)]
        format: report::Format,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Fit => commands::fit(&cfg),
        Command::Forecast { scenario, draws } => {
            let mut scenarios = scenario
                .iter()
                .map(|s| parse_scenario(s, cfg.horizon))
                .collect::<Result<Vec<_>>>()?;
            if scenarios.is_empty() {
                scenarios = cfg.scenarios.clone();
            }
            commands::forecast(&cfg, &scenarios, draws.as_deref())
        }
        Command::Sweep { extended, draws } => commands::sweep(&cfg, extended, draws.as_deref()),
        Command::PriorCheck { n_draws } => commands::prior_check(&cfg, n_draws),
        Command::Report { format } => report::report(&cfg, format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::FAILURE
        }
    }
}
