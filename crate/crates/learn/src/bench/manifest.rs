//! Machine-readable record of an experiment: what ran, on what, with which seeds.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LearnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    /// Digest over the input digests, in order.
    pub inputs_sha256: String,
    pub outputs: Vec<String>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<InputDigest, LearnError> {
    let data = std::fs::read(path).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&data),
        bytes: data.len() as u64,
    })
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, seeds: &[u64], config: &C, inputs: Vec<InputDigest>, outputs: Vec<String>) -> Self {
        let mut h = Sha256::new();
        for i in &inputs {
            h.update(i.sha256.as_bytes());
            h.update(b"\n");
        }
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: seeds.to_vec(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs,
            inputs_sha256: hex(&h.finalize()),
            outputs,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(path, text).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))
    }
}
