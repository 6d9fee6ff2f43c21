//! Run manifests: every output directory records the fully resolved
//! configuration so any run can be reproduced bit-identically.

use std::path::Path;
use std::time::Duration;

use anyhow::Result;
use serde_json::json;

use crate::config::RunConfig;
use crate::emit;

pub const FILE_NAME: &str = "manifest.json";

pub fn write(dir: &Path, subcommand: &str, config: &RunConfig, wall: Duration) -> Result<()> {
    let value = json!({
        "subcommand": subcommand,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": wall.as_secs_f64(),
        "determinism": "outputs are a pure function of the resolved configuration; \
                        rerunning with config_toml reproduces them bit-identically",
        "config_toml": config.to_toml(),
    });
    emit::write_json(&dir.join(FILE_NAME), &value)
}

/// Extracts the embedded configuration from a manifest file.
pub fn config_from(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let toml_text = value
        .get("config_toml")
        .and_then(|v| v.as_str())
        .ok_or_else(|| anyhow::anyhow!("manifest lacks config_toml"))?;
    RunConfig::from_toml(toml_text)
}
