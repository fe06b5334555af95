// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ehf_core::frontier::SweepMode;
use ehf_core::Error;

use crate::artifacts::Layout;
use crate::config::RunConfig;

/// Exit status of a failed run, by failure class.
mod exit {
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
    pub const NUMERIC: u8 = 4;
    pub const FORMAT: u8 = 5;
    pub const GRADCHECK: u8 = 6;
}

#[derive(Parser)]
#[command(name = "ehf", version, about = "Efficient hedging frontiers: simulate, label, train, sweep, report")]
struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Overrides the base seed of the config
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides the output directory of the config
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the sweep mode of the config
    #[arg(long, global = true, value_parser = ["retrain", "fast"])]
    mode: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate Heston paths and write them with a checksum manifest
    Simulate,
    /// Label local extrema, fit the random forest and forecast labels
    Label,
    /// Train the network policies of the experiment matrix
    Train,
    /// Evaluate every policy over the threshold grid on the test split
    Sweep,
    /// Summarise frontiers into comparison tables
    Report,
    /// Check analytic gradients against finite differences
    Gradcheck,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) => exit::CONFIG,
        Error::Io(_) => exit::IO,
        Error::Numeric(_) => exit::NUMERIC,
        Error::Format(_) => exit::FORMAT,
        Error::Shape(_) | Error::State(_) => exit::OTHER,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("this command needs --config PATH".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = &cli.mode {
        cfg.sweep.mode = mode.parse()?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Command::Gradcheck = cli.command {
        let lines = commands::gradcheck()?;
        for l in &lines {
            println!(
                "{} {:<30} max relative error {:.2e} (tolerance {:.0e})",
                if l.passed { "PASS" } else { "FAIL" },
                l.name,
                l.max_relative_error,
                l.tolerance
            );
        }
        return Ok(if lines.iter().all(|l| l.passed) { 0 } else { exit::GRADCHECK });
    }

    let cfg = load_config(cli)?;
    let layout = Layout::new(&cfg.output_dir);
    std::fs::create_dir_all(layout.root())?;
    let mode: SweepMode = cfg.sweep.mode;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &layout)?,
        Command::Label => commands::label(&cfg, &layout)?,
        Command::Train => commands::train(&cfg, &layout, mode)?,
        Command::Sweep => commands::sweep(&cfg, &layout, mode)?,
        Command::Report => commands::report(&cfg, &layout)?,
        Command::Gradcheck => unreachable!("handled above"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("ehf: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
