mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, Failure, EXIT_BUDGET, EXIT_INVALID};
use config::ConfigError;

/// Kyle-Back equilibrium with a risk-averse insider.
///
/// Exit codes: 0 ok, 1 invalid input, 2 non-convergence, 3 slope budget,
/// 4 missing artifact, 5 statistical gate failure.
#[derive(Parser)]
#[command(name = "kyleback", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides outputs.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Simulation seed (overrides simulate.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte-Carlo paths (overrides simulate.n_paths).
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the transport fixed point; writes g_star.csv, residuals.csv, mu_density.csv.
    FixedPoint,
    /// Solve the pricing equation from g_star.csv; writes surface CSVs.
    Pde,
    /// Impact, depth and conditional laws of the value at the configured probes.
    Report,
    /// Monte-Carlo batches and statistical gates.
    Simulate,
    /// fixed-point, pde, report and simulate in sequence.
    All,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = config::load(cli.config.as_deref()).map_err(config_failure)?;
    if let Some(out) = &cli.out {
        cfg.outputs.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.simulate.seed = seed;
    }
    if let Some(paths) = cli.paths {
        cfg.simulate.n_paths = paths;
    }
    let run = config::resolve(cfg).map_err(config_failure)?;
    let ctx = Context { out: run.config.outputs.dir.clone(), run, quiet: cli.quiet };
    commands::prepare(&ctx)?;
    match cli.command {
        Command::FixedPoint => commands::fixed_point(&ctx),
        Command::Pde => commands::pde(&ctx),
        Command::Report => commands::report(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::All => commands::all(&ctx),
    }
}

fn config_failure(e: ConfigError) -> Failure {
    let code = match e {
        ConfigError::Budget(_) => EXIT_BUDGET,
        ConfigError::Invalid(_) => EXIT_INVALID,
    };
    Failure::new(code, e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
