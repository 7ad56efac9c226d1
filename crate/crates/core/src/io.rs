//! Small file helpers shared by the report writers.

use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::Error::Data(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Everything needed to rerun a command and reproduce its report.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    /// `name = definition` for every sequence used.
    pub sequences: Vec<String>,
    pub precision_bits: usize,
    /// Sample points are deterministic; the seed is recorded for completeness.
    pub seed: u64,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: Vec<String>, config: serde_json::Value, sequences: Vec<String>) -> Self {
        RunManifest {
            command,
            config,
            sequences,
            precision_bits: crate::scalar::precision(),
            seed: 0,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// A report body together with its manifest.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Report<T: serde::Serialize> {
    pub manifest: RunManifest,
    pub result: T,
}
