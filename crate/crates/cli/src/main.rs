use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use darcy_cli::{run, Command, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(name = "darcy", version, about = "Spectral three-grid solver for high-contrast Darcy flow")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One single-phase solve.
    Solve(RunArgs),
    /// Single-phase solves over the Cartesian product of the sweep table.
    Sweep(RunArgs),
    /// Dense check of the two-grid bounds, one row per sweep point.
    VerifyTheory(RunArgs),
    /// Five-spot IMPES run with VTK snapshots.
    Simulate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set coarse.l_cc=8`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set output.dir=...`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::VerifyTheory(a) => (Command::VerifyTheory, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
    };
    let mut overrides = args.overrides;
    if let Some(out) = args.out {
        overrides.push(format!("output.dir={:?}", out.display().to_string()));
    }
    let result = ExperimentConfig::load(&args.config)
        .and_then(|c| c.with_overrides(&overrides))
        .map_err(RunError::from)
        .and_then(|cfg| run(command, &cfg));
    match result {
        Ok(summary) => {
            println!("{}", summary.results.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
