use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Provenance record written next to every command's outputs.
///
/// Everything except the two timestamps is a function of the command, the
/// effective configuration and the tool version, so equal `config_hash`
/// values imply byte-identical output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the command name and canonical effective configuration.
    pub config_hash: String,
    pub master_seed: Option<u64>,
    /// Output files relative to the output directory, in write order.
    pub outputs: Vec<String>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, master_seed: Option<u64>, started_unix_s: f64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config_hash,
            master_seed,
            outputs: Vec::new(),
            started_unix_s,
            finished_unix_s: started_unix_s,
        }
    }
}
