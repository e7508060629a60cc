//! Run records: config echo, timing and output digests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LabError, Report, RunConfig};

pub const RECORD_FILE: &str = "run_record.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: RunConfig,
    pub code_version: String,
    pub start_unix: f64,
    pub end_unix: f64,
    pub outputs: Vec<OutputDigest>,
    pub verdicts: Vec<(String, String)>,
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` through a sibling temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub(super) fn write_outputs(
    dir: &Path,
    report: &Report,
    cfg: &RunConfig,
    start: f64,
    end: f64,
) -> Result<RunRecord, LabError> {
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for f in &report.files {
        write_atomic(&dir.join(&f.name), &f.bytes)?;
        outputs.push(OutputDigest {
            file: f.name.clone(),
            sha256: sha256_hex(&f.bytes),
        });
    }
    let record = RunRecord {
        command: report.command.clone(),
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        start_unix: start,
        end_unix: end,
        outputs,
        verdicts: report
            .verdicts
            .iter()
            .map(|(k, v)| (k.clone(), v.as_str().to_string()))
            .collect(),
        summary: report.summary.clone(),
    };
    let text = serde_json::to_string_pretty(&record).map_err(|e| LabError::Config(e.to_string()))?;
    write_atomic(&dir.join(RECORD_FILE), text.as_bytes())?;
    Ok(record)
}

impl RunRecord {
    /// Loads `run_record.json` from `dir` and checks every output digest.
    pub fn load_verified(dir: &Path) -> Result<RunRecord, LabError> {
        let text = fs::read_to_string(dir.join(RECORD_FILE))?;
        let record: RunRecord = serde_json::from_str(&text).map_err(|e| LabError::Config(e.to_string()))?;
        for o in &record.outputs {
            let bytes = fs::read(dir.join(&o.file))?;
            if sha256_hex(&bytes) != o.sha256 {
                return Err(LabError::Integrity(format!("digest mismatch for {}", o.file)));
            }
        }
        Ok(record)
    }
}
