use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use reszone::{execute, Command, Exit, Options};

/// Averaged dynamics, bifurcation diagrams and cylinder maps of degenerate
/// resonance zones.
#[derive(Debug, Parser)]
#[command(name = "reszone", version)]
struct Cli {
    /// What to compute.
    #[arg(value_enum)]
    command: Command,

    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,

    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Worker threads for parameter sweeps (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,

    /// Also render SVG figures.
    #[arg(long)]
    svg: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::ConfigError as u8 } else { 0 });
        }
    };
    if let Some(jobs) = cli.jobs {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
        if let Err(e) = pool {
            eprintln!("reszone: cannot start {jobs} workers: {e}");
            return ExitCode::from(Exit::ComputationError as u8);
        }
    }
    match execute(cli.command, &cli.config, &cli.out, &Options { svg: cli.svg }) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            if report.failed {
                eprintln!("reszone: some checks failed");
                return ExitCode::from(Exit::ComputationError as u8);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("reszone: {e}");
            ExitCode::from(e.exit() as u8)
        }
    }
}
