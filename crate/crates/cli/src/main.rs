//! Command-line entry point: wires run configs to the generators,
//! mechanisms, methods, and evaluation harnesses.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CmdError;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "rejinf",
    about = "Reject-inference experiments for credit scoring",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graduated-selection sweep: per-method test Gini across acceptance
    /// rates; writes sweep.csv
    Sweep(CommonArgs),
    /// 2x2 Monte Carlo verdict table over (specification x mechanism);
    /// writes table1.csv
    Table1(CommonArgs),
    /// Fit a financed-only scorecard on a CSV dataset; writes
    /// coefficients.csv
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Input data CSV
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config's master_seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

fn run(common: &CommonArgs, go: impl FnOnce(&RunConfig, &std::path::Path) -> Result<(), CmdError>) -> ExitCode {
    if let Some(jobs) = common.jobs {
        // Results are keyed and order-independent, so the pool size never
        // changes the output, only the wall time.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut config = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    let out_dir = common.out.clone().unwrap_or_else(|| config.out_dir.clone());
    match go(&config, &out_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Sweep(common) => run(&common, commands::cmd_sweep),
        Command::Table1(common) => run(&common, commands::cmd_table1),
        Command::Fit { common, data } => {
            run(&common, |config, out| commands::cmd_fit(config, &data, out))
        }
    }
}
