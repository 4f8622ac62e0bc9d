//! Run manifests: what produced an artifact and from which inputs.
//!
//! A manifest is written next to every artifact as `<artifact>.manifest.json`.
//! Two runs with identical inputs, flags and seeds produce manifests that
//! differ only in their timestamps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_file, write_file, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub subcommand: String,
    /// SHA-256 of the canonical JSON form of `config`.
    pub config_digest: String,
    pub config: serde_json::Value,
    /// Input path to SHA-256 of its bytes.
    pub corpus_digests: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    /// Prompt instruction text, for LLM runs.
    pub instruction: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn start(command_line: Vec<String>, subcommand: &str, config: serde_json::Value) -> Self {
        // serde_json maps are ordered, so this string is canonical.
        let config_digest = sha256_hex(config.to_string().as_bytes());
        RunManifest {
            command_line,
            subcommand: subcommand.to_string(),
            config_digest,
            config,
            corpus_digests: BTreeMap::new(),
            seed: None,
            tool_version: TOOL_VERSION.to_string(),
            started_at: Utc::now(),
            finished_at: None,
            instruction: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_hex(&read_file(path)?);
        self.corpus_digests
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Path of the manifest accompanying `artifact`.
    pub fn path_for(artifact: &Path) -> PathBuf {
        let mut name = artifact.as_os_str().to_os_string();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    /// Stamp the finish time and write the manifest next to `artifact`.
    pub fn finish(mut self, artifact: &Path) -> Result<PathBuf> {
        self.finished_at = Some(Utc::now());
        let path = Self::path_for(artifact);
        let mut json = serde_json::to_string_pretty(&self)?;
        json.push('\n');
        write_file(&path, json.as_bytes())?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&read_file(path)?)?)
    }
}
