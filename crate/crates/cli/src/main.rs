//! `stabmin` — geometry, stability criterion, pointwise inequality
//! verification and mean-curvature flow over grid-sampled graphs.
//!
//! Exit codes: 0 the run's check passed (stable / converged / no
//! violations), 2 the check failed numerically, 3 inconclusive,
//! 1 operational error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod builtins;
mod config;
mod run;

#[derive(Parser)]
#[command(name = "stabmin", version, about = "Stability toolkit for graph submanifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// INI-style run configuration
    #[arg(long)]
    config: PathBuf,
    /// Seed override; recorded in every report
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and CSV dumps
    #[arg(long)]
    out: Option<PathBuf>,
    /// Criterion mode: slope | omega_paper | omega_derived
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the slope/density criterion on the configured graph
    Criterion(RunArgs),
    /// Criterion plus the smallest-Rayleigh-quotient analysis
    Analyze(RunArgs),
    /// Mean-curvature flow on the (optionally scaled) data
    Flow(RunArgs),
    /// Seeded randomized verification of the pointwise inequality
    VerifyAlgebra(RunArgs),
    /// scale -> flow -> criterion -> spectrum, with nested report
    Pipeline(RunArgs),
}

fn main() {
    let cli = Cli::parse();
    let (sub, args) = match cli.command {
        Command::Criterion(a) => (run::Subcommand::Criterion, a),
        Command::Analyze(a) => (run::Subcommand::Analyze, a),
        Command::Flow(a) => (run::Subcommand::Flow, a),
        Command::VerifyAlgebra(a) => (run::Subcommand::VerifyAlgebra, a),
        Command::Pipeline(a) => (run::Subcommand::Pipeline, a),
    };
    let overrides = run::Overrides { seed: args.seed, out: args.out, mode: args.mode };
    std::process::exit(run::execute(sub, &args.config, &overrides));
}
