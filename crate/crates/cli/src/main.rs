//! `momt`: solve, reduce, and diagnose multi-marginal transport instances,
//! and run the built-in scenarios.

mod commands;
mod error;
mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;
use error::{CliError, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "momt", version, about = "Discrete multi-marginal optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file and write a result file.
    Solve {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cross-check against exhaustive vertex enumeration.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Write the reduced problem on a subset of marginals and check that the
    /// pushforward of the optimal plan solves it.
    Reduce {
        path: PathBuf,
        /// 1-based marginal indices, e.g. `1,2`.
        #[arg(long)]
        subset: String,
        /// Reduced instance file (default `<path>.reduced.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and run the monotonicity, extremality, vertex and uniqueness checks.
    Diagnose {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        max_cycle: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run a scenario: sphere, shells, gs, monge, gw or twomap.
    Scenario {
        kind: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        /// Number of nested shells.
        #[arg(long)]
        shells: Option<usize>,
        /// Equatorial atoms on the sphere.
        #[arg(long)]
        equator: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<f64>>,
        #[arg(long)]
        touching: bool,
        /// Number of marginals (gs only).
        #[arg(long)]
        marginals: Option<usize>,
        /// Full scenario config as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv_dir: Option<PathBuf>,
        /// Run this many consecutive seeds in parallel.
        #[arg(long)]
        batch: Option<usize>,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MOMT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("MOMT_THREADS: `{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("MOMT_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Solve { path, out, oracle, tol } => {
            solve(&SolveArgs { path, out, oracle, tol })?;
        }
        Command::Reduce { path, subset, out } => {
            reduce_cmd(&ReduceArgs { path, subset, out })?;
        }
        Command::Diagnose {
            path,
            out,
            max_cycle,
            seed,
            tol,
        } => {
            diagnose(&DiagnoseArgs {
                path,
                out,
                max_cycle,
                seed,
                tol,
            })?;
        }
        Command::Scenario {
            kind,
            seed,
            n,
            d,
            shells,
            equator,
            alpha,
            beta,
            touching,
            marginals,
            config,
            out,
            csv_dir,
            batch,
        } => {
            scenario(&ScenarioArgs {
                kind,
                seed,
                n,
                d,
                shells,
                equator,
                alpha,
                beta,
                touching,
                marginals,
                config,
                out,
                csv_dir,
                batch,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
