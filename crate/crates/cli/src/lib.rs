//! Command-line front end for the tiered-memory simulator.

pub mod commands;
pub mod scenario;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use tiersim_core::Policy;

pub use commands::{
    cmd_gen_trace, cmd_run, cmd_split_analyze, cmd_sweep, simulate, write_results_csv, SweepRow, REPORT_SUFFIX,
    RESULTS_CSV,
};
pub use scenario::{Prepared, Scenario};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unreadable or invalid config, missing trace, malformed CSV.
    #[error("{0}")]
    Config(String),
    /// The simulation or output writing failed.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tiersim", version, about = "Tiered-memory page migration simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario with one policy.
    Run(RunArgs),
    /// Run every policy at every contention level.
    Sweep(SweepArgs),
    /// Write a synthetic trace to a binary trace file.
    GenTrace(GenTraceArgs),
    /// Print the split decision for a 512-row histogram CSV.
    SplitAnalyze(SplitAnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write one JSON line per hint fault to this file.
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    /// Background slow-tier load, percent of peak.
    #[arg(long)]
    pub contention: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub policy: Option<Policy>,
    /// Save the final subpage histogram as CSV.
    #[arg(long)]
    pub dump_histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated contention levels, percent of slow-tier peak.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 25.0, 50.0, 100.0])]
    pub contention: Vec<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    /// A trace spec, or a scenario with a `trace` section.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SplitAnalyzeArgs {
    pub histogram: PathBuf,
    /// Policy config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub fault_subpage: usize,
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => {
            let row = cmd_run(&a)?;
            let r = &row.report;
            println!(
                "{} {}: throughput {:.6}, promote {}/{} ok, {} demotions, {:.3} TLB misses/1k",
                row.scenario,
                row.policy,
                r.throughput_proxy,
                r.promote_success,
                r.promote_attempts(),
                r.demotions,
                r.tlb_misses_per_1k
            );
            Ok(())
        }
        Command::Sweep(a) => {
            for r in cmd_sweep(&a)? {
                println!("{:<22} {:>6}%  throughput {:.6}", r.policy.name(), r.contention_pct, r.report.throughput_proxy);
            }
            Ok(())
        }
        Command::GenTrace(a) => cmd_gen_trace(&a),
        Command::SplitAnalyze(a) => cmd_split_analyze(&a, &mut std::io::stdout().lock()),
    }
}
