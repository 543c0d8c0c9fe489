//! Per-seed training curves as CSV.
//!
//! The column set is fixed and versioned by [`LOG_SCHEMA`]. Absent values
//! (no sample cost or ratio for model-free rows) are empty fields. Wall-clock
//! time is written to a separate file so that the curve itself stays
//! byte-reproducible.

use std::path::Path;

use mbppol::metrics::EpochRecord;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub const LOG_SCHEMA: &str = "mbppol-log-v1";

pub const LOG_HEADER: [&str; 12] = [
    "epoch",
    "outer_epoch",
    "pass",
    "interactions",
    "avg_reward_return",
    "avg_cost_return",
    "avg_episode_cost",
    "lambda",
    "sample_cost",
    "epoch_violations",
    "cumulative_violations",
    "performance_ratio",
];

/// One CSV row. Field order matches [`LOG_HEADER`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub outer_epoch: usize,
    pub pass: usize,
    pub interactions: u64,
    pub avg_reward_return: f64,
    pub avg_cost_return: f64,
    pub avg_episode_cost: f64,
    pub lambda: f64,
    pub sample_cost: Option<f64>,
    pub epoch_violations: u64,
    pub cumulative_violations: u64,
    pub performance_ratio: Option<f64>,
}

impl From<&EpochRecord> for LogRow {
    fn from(r: &EpochRecord) -> Self {
        LogRow {
            epoch: r.epoch,
            outer_epoch: r.outer_epoch,
            pass: r.pass,
            interactions: r.interactions,
            avg_reward_return: r.avg_reward_return,
            avg_cost_return: r.avg_cost_return,
            avg_episode_cost: r.avg_episode_cost,
            lambda: r.lambda,
            sample_cost: r.sample_cost,
            epoch_violations: r.epoch_violations,
            cumulative_violations: r.cumulative_violations,
            performance_ratio: r.performance_ratio,
        }
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_owned(),
        source,
    }
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    w.write_record(LOG_HEADER).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(LOG_HEADER.iter().copied()) {
        return Err(CliError::Config(format!(
            "{}: header does not match {LOG_SCHEMA}",
            path.display()
        )));
    }
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

/// Wall-clock seconds since the start of the run, one value per log row.
pub fn write_timing(path: &Path, seconds: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["row", "wall_clock_s"]).map_err(csv_err(path))?;
    for (i, s) in seconds.iter().enumerate() {
        w.write_record([i.to_string(), format!("{s:.3}")]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}
