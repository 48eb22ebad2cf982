//! Evaluation harness: metrics, the synthetic shift benchmark, ablations,
//! sweeps, the domain probe and summary distribution tallies.

pub mod ablation;
pub mod distribution;
pub mod manifest;
pub mod metrics;
pub mod probe;
pub mod synthetic;

use crate::train::TrainConfig;

/// Short stable digest of a training configuration.
pub fn config_digest(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    manifest::sha256_hex(json.as_bytes())[..16].to_string()
}
