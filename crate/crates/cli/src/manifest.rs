//! Run manifests embedded in every output.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Fields that change between otherwise identical runs.
#[derive(Serialize)]
pub struct Timing {
    pub started: String,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    pub timing: Timing,
}

pub struct ManifestBuilder {
    command: String,
    started: chrono::DateTime<chrono::Utc>,
    clock: Instant,
    inputs: Vec<InputDigest>,
    /// Design column names, when the CSV had a header.
    pub columns: Option<Vec<String>>,
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            started: chrono::Utc::now(),
            clock: Instant::now(),
            inputs: Vec::new(),
            columns: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = digest_file(path)?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn finish(self, seed: Option<u64>, config: Value) -> Manifest {
        Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            inputs: self.inputs,
            columns: self.columns,
            timing: Timing {
                started: self.started.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                wall_time_s: self.clock.elapsed().as_secs_f64(),
            },
        }
    }
}
