//! `run.json` provenance records.

use std::collections::BTreeMap;
use std::path::Path;

use probshape::io_util::{git_style_hash, sha256_hex};
use serde::{Deserialize, Serialize};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of the config file bytes.
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
}

impl Record {
    pub fn new(command: &str, config: Option<&[u8]>, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config.map(sha256_hex),
            seed,
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> std::io::Result<Self> {
        self.inputs
            .insert(path.display().to_string(), hash_path(path)?);
        Ok(self)
    }
}

/// Git-style blob hash for a file; for a directory, a hash over the sorted
/// `name hash` lines of its entries (excluding `run.json`).
pub fn hash_path(path: &Path) -> std::io::Result<String> {
    if path.is_file() {
        return Ok(git_style_hash(&std::fs::read(path)?));
    }
    let mut entries: Vec<_> = std::fs::read_dir(path)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|e| e.file_name() != RUN_FILE)
        .collect();
    entries.sort_by_key(|e| e.file_name());
    let mut listing = String::new();
    for e in entries {
        listing.push_str(&format!(
            "{} {}\n",
            e.file_name().to_string_lossy(),
            hash_path(&e.path())?
        ));
    }
    Ok(git_style_hash(listing.as_bytes()))
}

/// Stores `record` under `key` in `dir/run.json`, keeping other keys.
pub fn write(dir: &Path, key: &str, record: Record) -> std::io::Result<()> {
    let path = dir.join(RUN_FILE);
    let mut all: BTreeMap<String, Record> = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    all.insert(key.to_string(), record);
    let mut text = serde_json::to_string_pretty(&all)?;
    text.push('\n');
    std::fs::write(path, text)
}
