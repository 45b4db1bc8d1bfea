//! Run provenance: every command that writes files leaves a `run.json`
//! beside them (inside the output directory, or `<file>.run.json` for
//! single-file outputs) recording the argv, seed, version, and wall time,
//! so any artifact can be regenerated from its record alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stackio::write_atomic;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRecord {
    pub repetitions: usize,
    pub mean_seconds: f64,
    pub stddev_seconds: f64,
}

impl TimingRecord {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        Self { repetitions: samples.len(), mean_seconds: mean, stddev_seconds: var.sqrt() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    /// Arguments as received (binary name stripped); replaying them
    /// reproduces the artifacts bit for bit.
    pub argv: Vec<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingRecord>,
}

/// Where a command's products went — used to place `run.json`.
#[derive(Debug, Clone, Default)]
pub struct RunTarget {
    /// `Some(dir)` for directory-producing commands, `Some(file)` wrapped
    /// via [`RunTarget::for_file`] for single-file outputs, `None` for
    /// stdout-only commands.
    pub run_json: Option<PathBuf>,
    pub outputs: Vec<String>,
}

impl RunTarget {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn for_dir(dir: &Path, outputs: Vec<String>) -> Self {
        Self { run_json: Some(dir.join("run.json")), outputs }
    }

    pub fn for_file(file: &Path) -> Self {
        let mut name = file.as_os_str().to_os_string();
        name.push(".run.json");
        Self {
            run_json: Some(PathBuf::from(name)),
            outputs: vec![file.display().to_string()],
        }
    }
}

pub fn write_run_record(target: &RunTarget, record: &RunRecord) -> Result<()> {
    if let Some(path) = &target.run_json {
        let json = serde_json::to_vec_pretty(record).expect("record serializes");
        write_atomic(path, &json)?;
    }
    Ok(())
}
