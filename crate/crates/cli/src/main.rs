//! `leosim`: batch simulator for statistical-CSI precoder designs.
//!
//! Exit codes: 0 success, 1 config error, 2 I/O error.

use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leo_precoding::scenario::{emit_csv, load_config, run_experiment, write_traces, RunOptions};
use leo_precoding::Error;

#[derive(Parser)]
#[command(name = "leosim", version, about = "LEO satellite downlink precoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the power/seed/algorithm sweep described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Results CSV.
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-solve `iter,objective` traces.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Worker threads (defaults to all cores).
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        threads: Option<u16>,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn simulate(
    config: PathBuf,
    out: PathBuf,
    trace_dir: Option<PathBuf>,
    threads: Option<u16>,
) -> Result<(), Error> {
    let cfg = load_config(&config)?;
    let opts = RunOptions {
        threads: threads.map(usize::from),
        record_wall_time: env::var("SIM_RECORD_WALL_MS").is_ok_and(|v| v == "1"),
    };
    let outcomes = run_experiment(&cfg, opts)?;
    for o in outcomes.iter().filter(|o| o.failure.is_some()) {
        eprintln!(
            "warning: {} at {} dBW, seed {} failed: {}",
            o.row.algorithm,
            o.row.power_dbw,
            o.row.seed,
            o.failure.as_deref().unwrap_or_default()
        );
    }
    let rows: Vec<_> = outcomes.iter().map(|o| o.row.clone()).collect();
    emit_csv(&rows, &out)?;
    if let Some(dir) = trace_dir {
        write_traces(&outcomes, &dir)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            trace_dir,
            threads,
        } => simulate(config, out, trace_dir, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
