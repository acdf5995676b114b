//! Command-line front end for the lifting pipeline. Builds or loads a
//! polynomial system, optionally reduces it to quadratic form, lifts it at a
//! chosen truncation level, solves the block forward-Euler system, and emits
//! plot-ready CSV and JSON.
//!
//! Exit codes: 0 success, 1 runtime or numerical failure, 2 bad input
//! (clap already uses 2 for usage errors).

mod commands;
mod outputs;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use carleman_core::CarlemanError;
use clap::{Args, Parser, Subcommand};

use source::SourceArgs;

#[derive(Parser)]
#[command(
    name = "carleman",
    version,
    about = "Lift polynomial ODEs to truncated linear systems and solve them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lift a system, solve the block time-stepping system, and write
    /// solution and error data
    Simulate(SimulateArgs),
    /// Report dissipation ratios, sparsity, and cost figures for a system
    Diagnose(DiagnoseArgs),
    /// Sweep the truncation level and tabulate the max-over-time error
    Converge(ConvergeArgs),
    /// Compare the lift of the reduced quadratic system against the direct
    /// lift of the source system
    Equivalence(EquivalenceArgs),
    /// Reduce a degree-k system to quadratic form and save the result
    Quadratize(QuadratizeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Truncation level of the lifted hierarchy
    #[arg(long = "N", default_value_t = 3, value_name = "LEVEL")]
    level: usize,

    /// Integration horizon; defaults to the preset's, or 1
    #[arg(long = "T", value_name = "TIME")]
    t_final: Option<f64>,

    /// Forward Euler steps; the default keeps each step small against the
    /// lifted coefficient norms
    #[arg(long, value_name = "STEPS")]
    m: Option<usize>,

    /// Padding steps held past the horizon (default: same as m)
    #[arg(long, value_name = "STEPS")]
    p: Option<usize>,

    /// Lift the input system directly at level N (the default path)
    #[arg(long)]
    direct_cl: bool,

    /// Reduce to quadratic form first, then lift the stacked system
    #[arg(long, conflicts_with = "direct_cl")]
    quadratized_cl: bool,

    /// Reference integrator steps for the error columns
    #[arg(long, default_value_t = 10_000, value_name = "STEPS")]
    reference_steps: usize,

    /// Directory for solution.csv, error.csv, and summary.json
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,

    /// Also export the lifted coefficient matrix as a_n.mtx
    #[arg(long)]
    export_matrix: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Truncation level the lifted dimension and measurement floor are
    /// quoted for
    #[arg(long = "N", default_value_t = 3, value_name = "LEVEL")]
    level: usize,

    /// Horizon the decay ratios are quoted over; defaults to the preset's,
    /// or 1
    #[arg(long = "T", value_name = "TIME")]
    t_final: Option<f64>,

    /// Error budget entering the cost expression
    #[arg(long, default_value_t = 0.01)]
    eps: f64,

    /// Step count the measurement floor is quoted for
    #[arg(long, default_value_t = 100, value_name = "STEPS")]
    m: usize,

    /// Padding count for the measurement floor (default: same as m)
    #[arg(long, value_name = "STEPS")]
    p: Option<usize>,

    /// Reference integrator steps for the decay ratios
    #[arg(long, default_value_t = 10_000, value_name = "STEPS")]
    reference_steps: usize,

    /// Also estimate the condition number of the block matrix (builds the
    /// full matrix; costly at large N)
    #[arg(long)]
    cond: bool,

    /// Write diagnostics.json here in addition to printing it
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Inclusive truncation-level sweep, written lo:hi
    #[arg(long = "N-range", default_value = "2:5", value_name = "LO:HI")]
    n_range: String,

    /// Integration horizon; defaults to the preset's, or 1
    #[arg(long = "T", value_name = "TIME")]
    t_final: Option<f64>,

    /// Steps of the shared fourth-order grid all levels are integrated on
    /// (default: the top level's stability heuristic, floored at 2000)
    #[arg(long, value_name = "STEPS")]
    m: Option<usize>,

    /// Lift directly at each level (the default path)
    #[arg(long)]
    direct_cl: bool,

    /// Reduce to quadratic form before lifting
    #[arg(long, conflicts_with = "direct_cl")]
    quadratized_cl: bool,

    /// Reference integrator steps for the error columns
    #[arg(long, default_value_t = 10_000, value_name = "STEPS")]
    reference_steps: usize,

    /// Directory for converge.csv
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EquivalenceArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Truncation level for the reduced lift; the direct lift runs at
    /// N(k-1)
    #[arg(long = "N", default_value_t = 2, value_name = "LEVEL")]
    level: usize,

    /// Comparison horizon; defaults to the preset's, or 1
    #[arg(long = "T", value_name = "TIME")]
    t_final: Option<f64>,

    /// Euler steps over the horizon, shared by both lifts
    #[arg(long, default_value_t = 1000, value_name = "STEPS")]
    m: usize,

    /// Seed for the built-in sampled cubic used when no system is given
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Write equivalence.json here in addition to printing it
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct QuadratizeArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Write the reduced quadratic system here as a JSON file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn exit_code(e: &CarlemanError) -> u8 {
    match e {
        CarlemanError::InvalidInput(_)
        | CarlemanError::Parse(_)
        | CarlemanError::DimensionMismatch(_)
        | CarlemanError::IndexOutOfBounds(_)
        | CarlemanError::Io(_) => 2,
        CarlemanError::NonFinite(_)
        | CarlemanError::CapacityExceeded { .. }
        | CarlemanError::NoConvergence { .. }
        | CarlemanError::Numerical(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
