use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use elnn_core::io::write_json;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration as JSON.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

pub struct Recorder {
    command: &'static str,
    started: Instant,
    started_unix: u64,
}

impl Recorder {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn finish<C: Serialize>(
        self,
        out_dir: &Path,
        config: &C,
        seed: Option<u64>,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Result<(), CliError> {
        let bytes = serde_json::to_vec(config).map_err(elnn_core::Error::from)?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_digest: hex::encode(Sha256::digest(&bytes)),
            seed,
            inputs,
            outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&out_dir.join("manifest.json"), &manifest)?;
        Ok(())
    }
}
