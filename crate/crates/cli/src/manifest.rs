//! Per-run JSON manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Build identification baked in at compile time.
pub const GIT_DESCRIBE: &str = env!("BDK_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, program name included.
    pub argv: Vec<String>,
    /// Every flag after defaults are applied.
    pub flags: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// `path -> checksum` (hex); the built-in checkpoint is `builtin:toy`.
    pub checkpoint: Option<(String, String)>,
    pub boundaries: BTreeMap<String, String>,
    pub git_describe: String,
    pub crate_version: String,
    pub wall_time_s: f64,
    /// Written files, relative to the output directory.
    pub outputs: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

pub fn manifest_file_name(command: &str) -> String {
    format!("manifest-{command}.json")
}
