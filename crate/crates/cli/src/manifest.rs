//! Run manifests: everything needed to repeat a job exactly.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use prefixopt::eval::EvalConfig;
use prefixopt::qfunc::ModelConfig;
use prefixopt::train::{SAConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A fully resolved job. Executing the same job twice gives the same outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Job {
    Train { eval: EvalConfig, train: TrainConfig, model: ModelConfig, out: PathBuf },
    Anneal { eval: EvalConfig, anneal: SAConfig, out: PathBuf },
    Enumerate { eval: EvalConfig, n: usize, limit: usize, out: PathBuf },
    Baselines { eval: EvalConfig, n: usize, out: PathBuf },
    Pareto { archives: Vec<PathBuf>, compare: bool, out: PathBuf },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Train { .. } => "train",
            Job::Anneal { .. } => "anneal",
            Job::Enumerate { .. } => "enumerate",
            Job::Baselines { .. } => "baselines",
            Job::Pareto { .. } => "pareto",
        }
    }

    pub fn out(&self) -> &Path {
        match self {
            Job::Train { out, .. }
            | Job::Anneal { out, .. }
            | Job::Enumerate { out, .. }
            | Job::Baselines { out, .. }
            | Job::Pareto { out, .. } => out,
        }
    }

    pub fn set_out(&mut self, dir: PathBuf) {
        match self {
            Job::Train { out, .. }
            | Job::Anneal { out, .. }
            | Job::Enumerate { out, .. }
            | Job::Baselines { out, .. }
            | Job::Pareto { out, .. } => *out = dir,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Train { train, .. } => Some(train.seed),
            Job::Anneal { anneal, .. } => Some(anneal.seed),
            _ => None,
        }
    }

    /// Passes the job through its serialized form, so a first run sees
    /// exactly the values a manifest re-run will read back.
    pub fn canonical(self) -> Result<Job, CliError> {
        let text = serde_json::to_string(&self).map_err(|e| CliError::Other(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub job: Job,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(job: Job) -> Self {
        RunManifest {
            seed: job.seed(),
            job,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now(),
            finished_unix: None,
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self, outputs: Vec<String>) {
        self.finished_unix = Some(now());
        self.outputs = outputs;
    }

    pub fn write(&self) -> Result<(), CliError> {
        let dir = self.job.out();
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
