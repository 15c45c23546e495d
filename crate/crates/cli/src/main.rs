use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use degenpde_cli::{dispatch, Command, RunConfig, EXIT_CONFIG};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Derived constants, regime and blow-up verdict.
    Analyze,
    /// Self-similar profile samples.
    Profile,
    /// Implicit finite-volume run.
    Solve,
    /// Theorem and lemma checks.
    Verify,
}

#[derive(Debug, Parser)]
#[command(
    name = "degenpde",
    version,
    about = "Doubly nonlinear degenerate parabolic toolkit"
)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let command = match cli.command {
        Cmd::Analyze => Command::Analyze,
        Cmd::Profile => Command::Profile,
        Cmd::Solve => Command::Solve,
        Cmd::Verify => Command::Verify,
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let cfg = match RunConfig::from_text(&text, command, cli.out, cli.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match dispatch(&cfg) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
