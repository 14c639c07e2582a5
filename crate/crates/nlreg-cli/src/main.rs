//! Experiment runner for the nonlocal operator toolkit: evaluates
//! operators, solves Dirichlet problems, runs the regularization pipeline,
//! and runs verification checks, all from declarative JSON manifests.

// Validation guards are written as !(x > 0.0) on purpose: the negated
// comparison rejects NaN, which x <= 0.0 would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use manifest::Command;

/// Runs one manifest-described experiment and writes its artifacts.
///
/// Exit status: 0 when every stage succeeded and all gated checks passed,
/// 1 for a failed compute stage, 2 for an invalid manifest or input file,
/// 3 for a gated check that ran and failed.
#[derive(Parser)]
#[command(name = "nlreg", version)]
pub struct Cli {
    /// Stage to run; must match the manifest's command field.
    #[arg(value_enum)]
    pub command: Command,
    /// JSON manifest describing the inputs and parameters.
    pub manifest: PathBuf,
    /// Artifact directory; overrides the manifest's output_dir.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// RNG seed; overrides the manifest's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker pool cap for grid sweeps; default is available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// 0 silent, 1 stage summaries, 2 per-step detail.
    #[arg(long, default_value_t = 1)]
    pub verbosity: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Can only fail if a global pool already exists, which cannot
        // happen this early; a diagnostics flag should not crash the run.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nlreg: {e}");
            ExitCode::from(e.status())
        }
    }
}
