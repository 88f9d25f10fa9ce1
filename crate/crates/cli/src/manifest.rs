//! Run manifests: every command writes one next to its outputs, and each
//! output file carries the manifest id that produced it.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// Digest of the deterministic run core: command, config, seed, code
    /// version, and RNG algorithm. Paths and timestamps are excluded so
    /// reruns into different directories keep the same id.
    pub manifest_id: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub code_version: String,
    pub rng_algorithm: String,
    pub created_at_unix: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        master_seed: u64,
        outputs: Vec<String>,
    ) -> Self {
        let code_version = env!("CARGO_PKG_VERSION").to_string();
        let rng_algorithm = qmeta_core::seed::RNG_ALGORITHM.to_string();
        let core = serde_json::json!({
            "command": command,
            "config": config,
            "master_seed": master_seed,
            "code_version": code_version,
            "rng_algorithm": rng_algorithm,
        });
        let digest = Sha256::digest(serde_json::to_vec(&core).expect("manifest core"));
        let manifest_id: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let created_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            manifest_id,
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            master_seed,
            code_version,
            rng_algorithm,
            created_at_unix,
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }

    /// Header line for JSONL outputs.
    pub fn jsonl_header(&self) -> String {
        format!("{{\"type\":\"manifest\",\"manifest_id\":\"{}\"}}", self.manifest_id)
    }

    /// Comment line for CSV outputs.
    pub fn csv_header(&self) -> String {
        format!("# manifest {}", self.manifest_id)
    }
}
