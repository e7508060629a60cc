//! Batch experiments: configuration, replica scheduling, reports and run
//! records.
//!
//! Every command is a pure function of its [`RunConfig`]. Replica `i` draws
//! its randomness from `mix(seed, i)` and results are merged by index, so the
//! emitted CSV bytes do not depend on the worker count.

mod commands;
mod config;
mod record;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use thiserror::Error;

pub use commands::{
    cmd_couple, cmd_dla, cmd_harmonic, cmd_interface_tail, cmd_locality, cmd_mixing, cmd_stationarity,
    envelope_probability,
};
pub use config::{apply_override, RunConfig};
pub use record::{OutputDigest, RunRecord};

use crate::aggregate_io::FormatError;
use crate::engine::EngineError;
use crate::graphical::StreamError;
use crate::harmonic::HarmonicError;
use crate::stats::Verdict;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl LabError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Precondition(_) | LabError::Format(_) | LabError::Config(_) => 2,
            LabError::Numerical(_) => 3,
            LabError::Integrity(_) | LabError::Io(_) | LabError::Csv(_) => 1,
        }
    }
}

impl From<HarmonicError> for LabError {
    fn from(e: HarmonicError) -> Self {
        match e {
            HarmonicError::Precondition(m) => LabError::Precondition(m),
            other => LabError::Numerical(other.to_string()),
        }
    }
}

impl From<StreamError> for LabError {
    fn from(e: StreamError) -> Self {
        LabError::Precondition(e.to_string())
    }
}

impl From<EngineError> for LabError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Harmonic(h) => h.into(),
            EngineError::DominatingRateViolated { .. } => LabError::Numerical(e.to_string()),
            other => LabError::Precondition(other.to_string()),
        }
    }
}

/// One emitted table.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub files: Vec<OutputFile>,
    pub summary: serde_json::Value,
    /// Named trend assertions.
    pub verdicts: Vec<(String, Verdict)>,
}

impl Report {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.name == name).map(|f| f.bytes.as_slice())
    }

    pub fn overall(&self) -> Verdict {
        self.verdicts.iter().fold(Verdict::Pass, |acc, (_, v)| acc.and(*v))
    }

    /// 0 when every assertion passed, 4 when any was inconclusive or failed.
    pub fn exit_code(&self) -> i32 {
        match self.overall() {
            Verdict::Pass => 0,
            _ => 4,
        }
    }
}

/// Runs `f(i)` for `i in 0..count` and returns results in index order.
pub fn run_replicas<T, F>(count: u64, f: F) -> Result<Vec<T>, LabError>
where
    T: Send,
    F: Fn(u64) -> Result<T, LabError> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

pub type Command = fn(&RunConfig) -> Result<Report, LabError>;

pub fn command_by_name(name: &str) -> Option<Command> {
    Some(match name {
        "harmonic" => cmd_harmonic,
        "interface-tail" => cmd_interface_tail,
        "dla" => cmd_dla,
        "couple" => cmd_couple,
        "locality" => cmd_locality,
        "stationarity" => cmd_stationarity,
        "mixing" => cmd_mixing,
        _ => return None,
    })
}

/// Runs `cmd` on a pool of `cfg.workers` threads.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Report, LabError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| LabError::Config(e.to_string()))?;
    pool.install(|| cmd(cfg))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Runs a named command and persists its files plus `run_record.json` under
/// `cfg.out_dir`.
pub fn run_and_write(name: &str, cfg: &RunConfig) -> Result<(Report, RunRecord), LabError> {
    let cmd = command_by_name(name).ok_or_else(|| LabError::Config(format!("unknown command {name}")))?;
    let start = unix_now();
    let report = execute(cmd, cfg)?;
    let end = unix_now();
    let dir = Path::new(&cfg.out_dir);
    let record = record::write_outputs(dir, &report, cfg, start, end)?;
    Ok((report, record))
}
