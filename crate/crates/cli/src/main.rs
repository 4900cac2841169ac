use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fovea_core::io::{self, RunConfig, OUTPUT_DIR_ENV};
use fovea_core::EventKind;

/// Neural-field simulator of covert and overt spatial attention.
#[derive(Debug, Parser)]
#[command(name = "fovea", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trial; exit 0 when the target is foveated, 2 on budget.
    Run {
        config: PathBuf,
        /// Output directory (overrides FOVEA_OUTPUT_DIR and `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run up to a step and dump the configured maps as PGM + CSV.
    Snapshot {
        config: PathBuf,
        #[arg(long)]
        step: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load and validate a config, then print it with defaults filled in.
    Validate { config: PathBuf },
}

fn output_dir(config: &RunConfig, cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.output.dir.clone())
}

fn load(path: &Path) -> anyhow::Result<RunConfig> {
    io::load_config(path).with_context(|| format!("invalid config {}", path.display()))
}

fn execute(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let dir = output_dir(&cfg, out);
            let report = io::run(&cfg, &dir)?;
            for e in &report.log.events {
                let at = e
                    .world
                    .map(|w| format!(" world=({:.2}, {:.2})", w[0], w[1]))
                    .unwrap_or_default();
                println!("{:>6} {:?}{at}", e.step, e.kind);
            }
            let switches = report.log.of_kind(EventKind::Switch).count();
            println!(
                "{:?} after {} steps, {switches} switch(es); outputs in {}",
                report.outcome,
                report.steps,
                dir.display()
            );
            Ok(ExitCode::from(report.outcome.exit_code() as u8))
        }
        Command::Snapshot { config, step, out } => {
            let cfg = load(&config)?;
            let dir = output_dir(&cfg, out);
            let report = io::snapshot(&cfg, step, &dir)?;
            if report.step < step {
                eprintln!("trial ended at step {}; dumped that state", report.step);
            }
            for f in &report.files {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            print!("{}", io::config_to_string(&cfg)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    // clap exits 2 on usage errors, which would read as Budget.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
