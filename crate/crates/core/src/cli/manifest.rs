use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{file_digest, write_json};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<FileDigest> {
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        })
    }
}

/// Record of one command run. Everything but the timestamps is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value, seed: Option<u64>) -> RunManifest {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            parameters,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now(),
            finished_at: 0.0,
        }
    }

    pub fn inputs(mut self, paths: &[PathBuf]) -> Result<Self> {
        self.inputs = paths.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn outputs(mut self, paths: &[PathBuf]) -> Result<Self> {
        self.outputs = paths.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?;
        Ok(self)
    }

    /// Writes `<dir>/<name>.manifest.json` and returns its path.
    pub fn write(mut self, dir: &Path, name: &str) -> Result<PathBuf> {
        self.finished_at = now();
        let path = dir.join(format!("{name}.manifest.json"));
        write_json(&path, &self)?;
        Ok(path)
    }
}
