mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, EXIT_OK, EXIT_USAGE};
use config::RunConfig;

/// Ground states, cylinder spectra and bifurcating periodic domains for
/// overdetermined semilinear problems.
#[derive(Debug, Parser)]
#[command(name = "onduloid", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true, default_value = "onduloid.toml")]
    config: PathBuf,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ground state, Robin constant, ball spectra and the critical period.
    Analyze,
    /// Sample the lowest cylinder eigenvalue over a range of periods.
    Sigma,
    /// Certify the bifurcation and trace the branch of periodic domains.
    Branch,
    /// Run the numerical self-checks and report PASS/FAIL per check.
    Verify,
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    let cfg = RunConfig::load(&cli.config).map_err(Failure::Usage)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    match cli.command {
        Command::Analyze => commands::analyze(&cfg, &out),
        Command::Sigma => commands::sigma(&cfg, &out),
        Command::Branch => commands::branch(&cfg, &out),
        Command::Verify => commands::verify(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
