use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

#[derive(Serialize)]
pub struct InputInfo {
    pub source: String,
    pub rows: usize,
    pub cols: usize,
    pub total: u64,
}

/// Provenance record written next to every run's outputs.
#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<InputInfo>,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, parameters: Value, seed: Option<u64>, threads: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: Vec::new(),
            parameters,
            seed,
            threads: if threads == 0 { rayon::current_num_threads() } else { threads },
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
