use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use degenlab::config::RunConfig;
use degenlab::{exit, exit_code, run, Command};

/// Numerical laboratory for degenerate semilinear reaction-diffusion on (-1, 1).
#[derive(Debug, Parser)]
#[command(name = "degenlab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent trials and levels.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    }
    let mut cfg = match RunConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let hash = cfg.hash();
    let report = match run(cli.command, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Err(e) = report.write(&cfg.output_dir, &hash, cfg.seed) {
        eprintln!("error: {e:#}");
        return ExitCode::from(exit::INVARIANT as u8);
    }
    for inv in report.invariants.iter().filter(|i| !i.passed) {
        eprintln!("FAIL {}: {}", inv.name, inv.detail);
    }
    let passed = report.passed();
    println!(
        "{} {}: {} invariants, {} failed; report in {}",
        report.subcommand,
        if passed { "ok" } else { "FAILED" },
        report.invariants.len(),
        report.invariants.iter().filter(|i| !i.passed).count(),
        cfg.output_dir.display()
    );
    ExitCode::from(if passed { exit::OK } else { exit::INVARIANT } as u8)
}
