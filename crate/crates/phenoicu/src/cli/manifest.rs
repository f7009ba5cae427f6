//! Run manifests: enough provenance (config hash, input content hashes, seed,
//! crate version) to reproduce any artifact exactly. No wall-clock fields, so
//! reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::seeds::fnv64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot hash input {}: {e}", path.display())))?;
        self.input_hashes.insert(
            path.display().to_string(),
            format!("{:016x}", fnv64(&bytes)),
        );
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(format!("manifest serialization: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}
