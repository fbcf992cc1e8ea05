use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qis_core::{SensorConfig, ThresholdMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the command name and its resolved parameters.
pub fn config_hash<T: Serialize>(command: &str, params: &T) -> Result<String> {
    let body = serde_json::to_vec(&(command, params))?;
    Ok(hex::encode(Sha256::digest(&body)))
}

/// Sidecar written next to every primary artifact as `<artifact>.meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<SensorConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold_map: Option<ThresholdMap>,
    /// Command-specific parameters and results.
    pub details: serde_json::Value,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_meta(artifact: &Path, meta: &Meta) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    let p = meta_path(artifact);
    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
}

pub fn read_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> qis_core::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
}

/// Shortest round-trip decimal form; NaN and infinities spelled out.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        v.to_string()
    }
}
