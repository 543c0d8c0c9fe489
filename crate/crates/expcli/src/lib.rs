//! Experiment runner for the constrained agents in `mbppol`: configuration
//! loading, seeded multi-run orchestration, CSV curves and JSON summaries.

pub mod config;
pub mod log;
pub mod report;
pub mod runner;

pub use config::{EnvConfig, ModelBasedSection, RunConfig};
pub use log::{read_log, write_log, LogRow, LOG_HEADER, LOG_SCHEMA};
pub use report::{
    outer_rows,
    aggregate, cumulative_violations, normalize_against_baseline, normalize_dir, Aggregate, SeedSummary, Stat,
};
pub use runner::{run_experiment, run_seed, seed_dir, ExperimentReport, SeedFailure};

use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing baseline: {0}")]
    MissingBaseline(String),

    #[error("invalid baseline: {0}")]
    InvalidBaseline(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error(transparent)]
    Core(#[from] mbppol::Error),
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

pub(crate) fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}
