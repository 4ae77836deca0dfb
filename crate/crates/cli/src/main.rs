//! `safe-nav`: validate, simulate, audit, sweep and plot navigation scenarios.
//!
//! Exit codes: 0 success, 1 domain failure (invalid scenario, unsafe or
//! unfinished run, infeasible audit sample), 2 usage, parse or I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "safe-nav",
    version,
    about = "Safe waypoint navigation with CLF-CBF quadratic programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file and print every violated invariant.
    Validate { scenario: PathBuf },
    /// Simulate a scenario and write trajectory.csv, summary.json and plot.svg.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        sim: SimOverrides,
        #[arg(long, allow_negative_numbers = true)]
        k1: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        k2: Option<f64>,
        /// Recorded in summary.json; the simulation itself is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample states on every segment and look for infeasible controller QPs.
    Audit {
        scenario: PathBuf,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        k1: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        k2: Option<f64>,
        /// Also write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every (k1, k2) pair of a gain grid in parallel.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
        k1: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
        k2: Vec<f64>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        #[command(flatten)]
        sim: SimOverrides,
    },
    /// Render a trajectory CSV over its scenario.
    Plot {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
        /// Two coordinate indices to project onto.
        #[arg(long, value_delimiter = ',', num_args = 1, default_value = "0,1")]
        axes: Vec<usize>,
    },
}

/// Flags taking precedence over the scenario file.
#[derive(Debug, Clone, Default, Args)]
pub struct SimOverrides {
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long = "t-max", allow_negative_numbers = true)]
    pub t_max: Option<f64>,
    /// Hold the input constant over each step instead of re-solving at every RK4 stage.
    #[arg(long)]
    pub zoh: bool,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{s} is not a positive number"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => commands::validate(&scenario),
        Command::Run {
            scenario,
            out,
            sim,
            k1,
            k2,
            seed,
        } => commands::run(&scenario, &out, &sim, (k1, k2), seed),
        Command::Audit {
            scenario,
            samples,
            seed,
            gamma,
            k1,
            k2,
            report,
        } => commands::audit(&scenario, samples as usize, seed, gamma, (k1, k2), report.as_deref()),
        Command::Sweep {
            scenario,
            k1,
            k2,
            out,
            sim,
        } => commands::sweep(&scenario, &k1, &k2, &out, &sim),
        Command::Plot {
            scenario,
            csv,
            out,
            axes,
        } => commands::plot(&scenario, &csv, &out, &axes),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
