//! Command-line front-end: reads scenario JSON, runs experiments from
//! `stsmc-core` and writes CSV/JSON reports.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 divergence.

/// `println!` that ignores a closed stdout.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{GainArgs, Outcome, RunContext};
use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "stsmc", version, about = "Limit cycles and gain tuning for under-tuned super-twisting loops")]
pub struct Cli {
    /// Scenario or problem JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "stsmc-out")]
    pub out: PathBuf,
    /// Regularisation width, overrides the config.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Integration step, overrides the config; must respect the stability cap.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Rising-time fraction n in (0, 1/2] used for W1.
    #[arg(long, global = true)]
    pub n_fraction: Option<f64>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Simulate one scenario; writes trajectory.csv and report.json.
    Simulate,
    /// Sweep L, T or a gain; writes sweep.csv and fit.json.
    Sweep,
    /// Tune gains for an amplitude target; writes tuning.json.
    Tune {
        /// Also simulate the tuned gains and compare with W1.
        #[arg(long)]
        validate: bool,
    },
    /// Re-tune and re-simulate the reference operating points; writes table1.csv.
    Table1,
    /// Evaluate every gain condition and bound; writes check_gains.json.
    CheckGains {
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        k2: Option<f64>,
        /// Perturbation rate bound L.
        #[arg(long = "L", alias = "rate-bound")]
        rate_bound: Option<f64>,
        /// Perturbation period T.
        #[arg(long = "T", alias = "period")]
        period: Option<f64>,
        /// Period-mean perturbation rate.
        #[arg(long)]
        mean_rate: Option<f64>,
    },
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let ctx = RunContext {
        config: cli.config,
        out: cli.out,
        overrides: Overrides { delta: cli.delta, dt: cli.dt, n_fraction: cli.n_fraction },
    };
    match cli.command {
        Cmd::Simulate => commands::simulate(&ctx),
        Cmd::Sweep => commands::sweep(&ctx),
        Cmd::Tune { validate } => commands::tune(&ctx, validate),
        Cmd::Table1 => commands::table1(&ctx),
        Cmd::CheckGains { k1, k2, rate_bound, period, mean_rate } => {
            commands::check_gains(&ctx, GainArgs { k1, k2, rate_bound, period, mean_rate })
        }
    }
}

/// Process exit code for a finished run.
pub fn exit_code(result: &anyhow::Result<Outcome>) -> u8 {
    match result {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::Diverged) => 2,
        Err(e) if matches!(e.downcast_ref::<stsmc_core::Error>(), Some(stsmc_core::Error::Divergence { .. })) => 2,
        Err(_) => 1,
    }
}
