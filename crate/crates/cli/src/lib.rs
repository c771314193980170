//! Configuration loading, subcommand dispatch and report emission for `degenlab`.

pub mod commands;
pub mod config;
pub mod report;

use clap::ValueEnum;
use degen_core::solver::ExactSolution;
use degen_core::Error;

use crate::config::{ConvergeConfig, RunConfig};
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Classify,
    VerifyInequalities,
    ValidateF,
    OperatorChecks,
    Solve,
    StrongLimit,
    Stability,
    Converge,
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const INVARIANT: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
}

pub fn run(cmd: Command, cfg: &RunConfig) -> degen_core::Result<Report> {
    match cmd {
        Command::Classify => commands::classify(cfg),
        Command::VerifyInequalities => commands::verify_inequalities(cfg),
        Command::ValidateF => commands::validate_f(cfg),
        Command::OperatorChecks => commands::operator_checks(cfg),
        Command::Solve => commands::solve(cfg),
        Command::StrongLimit => commands::strong_limit(cfg),
        Command::Stability => commands::stability(cfg),
        Command::Converge => commands::converge(cfg),
    }
}

/// Configuration problems exit 2, numerical breakdowns exit 3.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } | Error::StepSize { .. } | Error::Divergence { .. } | Error::Indeterminate { .. } => {
            exit::NON_CONVERGENCE
        }
        Error::UndefinedRatio(_) => exit::INVARIANT,
        _ => exit::CONFIG,
    }
}

/// Spatial study at `M = N²` for an exact solution with no `converge` section.
pub fn default_study(exact: ExactSolution) -> ConvergeConfig {
    ConvergeConfig {
        exact,
        cells: vec![(32, 1024), (64, 4096), (128, 16384)],
        horizon: 0.1,
        grading: None,
    }
}
