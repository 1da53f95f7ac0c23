use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod output;

use commands::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Nodes,
    Cores,
    Config,
}

#[derive(Debug, Parser)]
#[command(name = "pipesim", version, about = "Plan, simulate and price hybrid Spark genomics pipelines")]
pub struct Cli {
    /// Scenario file naming the pipeline, batch, cluster, model and pricing files
    #[arg(long, global = true, default_value = "fixtures/scenario.json")]
    scenario: PathBuf,
    /// Output directory for data files (overrides the scenario's output_dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Interpolate scale-out efficiency for node counts that were not calibrated
    #[arg(long, global = true)]
    interpolate_efficiency: bool,
    /// Format of the data files written
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every validator; exit 1 on hard violations
    Validate,
    /// Compile the execution plan and print it
    Plan,
    /// Simulate the plan; write timeline, per-stage breakdown and cost report
    Simulate,
    /// Fit core cap, rate scale and scale-out efficiencies to measurements
    Calibrate {
        /// CSV with columns nodes,cores_per_node,config,stages,size_gb,minutes
        #[arg(long)]
        observations: PathBuf,
        /// Keep the seed model's core cap
        #[arg(long)]
        fix_core_cap: bool,
        /// Keep the baseline stage rates
        #[arg(long)]
        fix_rates: bool,
    },
    /// Predict makespan across node counts, cores per node or Spark configs
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values, e.g. 1,2,4 or 20/2/4/16,20/4/2/8
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Stage subset joined with '+' (default: whole pipeline)
        #[arg(long)]
        stages: Option<String>,
        /// Restrict the batch to one sample
        #[arg(long)]
        sample: Option<String>,
    },
    /// Compare cluster cost and time with the per-GB service
    Compare {
        /// Restrict the batch to one sample
        #[arg(long)]
        sample: Option<String>,
        /// Use this cluster makespan (minutes) instead of the simulated one
        #[arg(long)]
        makespan: Option<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                CliError::Domain(_) => 1,
                CliError::Io(_) => 2,
            })
        }
    }
}
