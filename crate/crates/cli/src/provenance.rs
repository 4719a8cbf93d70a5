use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub curve_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub threads: usize,
}

impl Provenance {
    pub fn new(cfg: &RunConfig, curve_hash: String) -> Self {
        Self {
            config_hash: config_hash(cfg),
            curve_hash,
            code_version: CODE_VERSION.to_string(),
            seed: cfg.seed,
            threads: cfg.threads,
        }
    }
}

/// Hash of the resolved config; the output directory is a destination, not a parameter, and is left out.
pub fn config_hash(cfg: &RunConfig) -> String {
    let view = RunConfig { output_dir: None, ..cfg.clone() };
    let text = serde_json::to_string(&view).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Every JSON artifact has this shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub command: String,
    pub provenance: Provenance,
    pub config: RunConfig,
    pub result: T,
}
