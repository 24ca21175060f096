//! Command-line driver for `reszone-core`: configuration parsing, command
//! dispatch, and the CSV, JSON and SVG file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;
pub mod verify;

use std::path::{Path, PathBuf};

pub use commands::{Options, Outcome};
pub use config::{parse_config, Command, ConfigError, RunConfig};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    ComputationError = 1,
    ConfigError = 2,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),

    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },

    #[error("{0:#}")]
    Computation(anyhow::Error),
}

impl RunError {
    pub fn exit(&self) -> Exit {
        match self {
            RunError::Config(_) | RunError::ReadConfig { .. } => Exit::ConfigError,
            RunError::Computation(_) => Exit::ComputationError,
        }
    }
}

/// What a finished run produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub failed: bool,
}

/// Reads and validates the configuration, runs the command, then writes all
/// artifacts into `out`. Nothing is written unless the computation succeeds.
pub fn execute(command: Command, config: &Path, out: &Path, opts: &Options) -> Result<Report, RunError> {
    let text = std::fs::read_to_string(config).map_err(|source| RunError::ReadConfig {
        path: config.to_path_buf(),
        source,
    })?;
    let cfg = parse_config(&text, Some(command))?;
    let outcome = commands::run(&cfg, opts).map_err(RunError::Computation)?;
    let files = output::write_artifacts(out, &outcome.artifacts).map_err(RunError::Computation)?;
    Ok(Report {
        files,
        summary: outcome.summary,
        failed: outcome.failed,
    })
}
