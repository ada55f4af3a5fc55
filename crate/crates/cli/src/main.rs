//! `pblf` — experiment runner for barrier-Lyapunov backstepping control.

mod commands;
mod config;
mod output;
mod svg;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pblf",
    about = "Simulate, verify, and compare barrier-Lyapunov backstepping controllers \
             on strict-feedback systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Built-in experiment preset (paper-output-constrained, paper-full-state).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,

    /// JSON experiment configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a configuration field (repeatable), e.g. --set h=1e-4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory (default: $PBLF_OUT or ./pblf-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop simulation and emit trajectory, report, and figures.
    Simulate(CommonArgs),
    /// Run matched state-space and error-space simulations and check every
    /// boundedness, invariance, and convergence claim.
    Verify(CommonArgs),
    /// Run the same experiment under several barrier kinds and overlay the
    /// control magnitudes and barrier shapes.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated barrier kinds (standard-log, log-pblf, rational-pblf).
        #[arg(long, value_delimiter = ',', required = true)]
        kinds: Vec<String>,
    },
    /// Re-run the experiment over a list of parameter values and tabulate
    /// the run metrics.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter to sweep: beta, kappa1, kappa2, or h.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
}

fn resolve_common(args: &CommonArgs) -> Result<(config::ExperimentConfig, PathBuf)> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), _) => config::preset(name)?,
        (None, Some(path)) => config::load_config_file(path)?,
        (None, None) => anyhow::bail!("provide --preset NAME or --config FILE"),
    };
    for s in &args.set {
        config::apply_set(&mut cfg, s)?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os("PBLF_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("pblf-out"));
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(common) => {
            let (cfg, out) = resolve_common(&common)?;
            std::fs::create_dir_all(&out)?;
            commands::write_config_snapshot(&cfg, &out)?;
            commands::cmd_simulate(cfg, &out)?;
            Ok(commands::EXIT_OK)
        }
        Command::Verify(common) => {
            let (cfg, out) = resolve_common(&common)?;
            std::fs::create_dir_all(&out)?;
            commands::write_config_snapshot(&cfg, &out)?;
            commands::cmd_verify(cfg, &out)
        }
        Command::Compare { common, kinds } => {
            let (cfg, out) = resolve_common(&common)?;
            std::fs::create_dir_all(&out)?;
            commands::write_config_snapshot(&cfg, &out)?;
            commands::cmd_compare(cfg, &kinds, &out)?;
            Ok(commands::EXIT_OK)
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let (cfg, out) = resolve_common(&common)?;
            let values: Vec<f64> = values
                .split(',')
                .filter(|v| !v.trim().is_empty())
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| anyhow::anyhow!("bad sweep value '{v}'"))
                })
                .collect::<Result<_>>()?;
            std::fs::create_dir_all(&out)?;
            commands::write_config_snapshot(&cfg, &out)?;
            commands::cmd_sweep(cfg, &param, &values, &out)?;
            Ok(commands::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_for(&e) as u8)
        }
    }
}
