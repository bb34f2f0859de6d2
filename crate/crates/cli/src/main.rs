mod diagnose;
mod estimate;
mod manifest;
mod oracle_check;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Doubly robust area-level treatment effects from survey data.
#[derive(Debug, Parser)]
#[command(name = "causal-sae", version, about)]
struct Cli {
    /// Worker threads; `1` gives bit-reproducible runs. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "CAUSAL_SAE_OUT", default_value = "causal-sae-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo study for one synthetic design.
    Simulate(simulate::Args),
    /// Area-level estimates from a survey file.
    Estimate(estimate::Args),
    /// Exact checks on a discrete world.
    OracleCheck(oracle_check::Args),
    /// Regression check of area effects given covariates.
    Diagnose(diagnose::Args),
}

/// Bad flags, files or configuration. Maps to exit status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<InputError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<causal_sae::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(input_error("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| input_error(format!("cannot create output directory {}: {e}", cli.out.display())))?;
    match cli.command {
        Command::Simulate(a) => simulate::run(a, &cli.out),
        Command::Estimate(a) => estimate::run(a, &cli.out),
        Command::OracleCheck(a) => oracle_check::run(a, &cli.out),
        Command::Diagnose(a) => diagnose::run(a, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
