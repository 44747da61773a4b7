use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fogctl_cli::{CliResult, Format, RunOptions};

/// Optimal control over unreliable, delayed fog endpoints.
#[derive(Debug, Parser)]
#[command(name = "fogctl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replications; overrides the config.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            out: self.out.clone(),
            seed: self.seed,
            replications: self.replications,
            format: self.format,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the gain schedules to gains.json.
    Gains(Common),
    /// Closed-loop Monte Carlo; writes summary.json and optional traces.
    Simulate(Common),
    /// Check the gains against the oracle; exit code 3 on failure.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Corrupt the gains before checking (verifier self-test).
        #[arg(long, hide = true)]
        tamper_lambda: bool,
    },
    /// Rank endpoints by optimal cost; writes placement.csv.
    Placement {
        #[command(flatten)]
        common: Common,
        /// Endpoint catalog (JSON array); defaults to the built-in table.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Seconds per stage, for converting latencies.
        #[arg(long)]
        delta_t: Option<f64>,
    },
    /// Write the drone reference path to waypoints.csv.
    Waypoints {
        /// Scenario config; the default scenario if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        delta_t: Option<f64>,
    },
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Gains(c) => {
            fogctl_cli::cmd_gains(&fogctl_cli::load_config(&c.config)?, &c.options())
        }
        Command::Simulate(c) => {
            fogctl_cli::cmd_simulate(&fogctl_cli::load_config(&c.config)?, &c.options())
        }
        Command::Verify {
            common,
            tamper_lambda,
        } => {
            let config = fogctl_cli::load_config(&common.config)?;
            if tamper_lambda {
                fogctl_cli::cmd_verify_with(&config, &common.options(), fogctl_cli::negate_lambda)
            } else {
                fogctl_cli::cmd_verify(&config, &common.options())
            }
        }
        Command::Placement {
            common,
            catalog,
            delta_t,
        } => {
            let config = fogctl_cli::load_config(&common.config)?;
            let catalog = catalog
                .as_deref()
                .map(fogctl_cli::load_catalog)
                .transpose()?;
            fogctl_cli::cmd_placement(&config, catalog.as_deref(), delta_t, &common.options())
        }
        Command::Waypoints {
            config,
            out,
            delta_t,
        } => {
            let config = config.as_deref().map(fogctl_cli::load_config).transpose()?;
            let opts = RunOptions {
                out,
                ..RunOptions::default()
            };
            fogctl_cli::cmd_waypoints(config.as_ref(), delta_t, &opts)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fogctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
