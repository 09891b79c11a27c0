//! Scene files for `simulate`: TOML naming a preset plus field overrides.
//!
//! ```toml
//! preset = "unknown-object"
//! seed = 7
//! frame_count = 90
//! noise_sigma = 0.5
//! ```

use std::fs;
use std::path::Path;

use dynkp_core::SceneConfig;

use crate::error::CliError;

pub const PRESETS: &[&str] = &["static", "person-box", "unknown-object", "ablation", "dynamic"];

pub fn preset(name: &str) -> Result<SceneConfig, CliError> {
    Ok(match name {
        "static" => SceneConfig::static_scene(),
        "person-box" => SceneConfig::person_and_box(),
        "unknown-object" => SceneConfig::unknown_object_scene(),
        "ablation" => SceneConfig::ablation_scene(),
        "dynamic" => SceneConfig::long_dynamic_scene(),
        _ => {
            return Err(CliError::usage(format!(
                "unknown preset `{name}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Top-level keys replace the preset's fields wholesale.
pub fn parse_scene(text: &str) -> Result<SceneConfig, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e| CliError::usage(format!("scene file: {e}")))?;
    let base = match table.remove("preset") {
        Some(toml::Value::String(name)) => preset(&name)?,
        Some(other) => return Err(CliError::usage(format!("scene file: preset must be a string, got {other}"))),
        None => SceneConfig::static_scene(),
    };
    let mut merged = toml::Table::try_from(&base).expect("scene config serializes");
    for (key, value) in table {
        if !merged.contains_key(&key) {
            return Err(CliError::usage(format!("scene file: unknown field `{key}`")));
        }
        merged.insert(key, value);
    }
    let config: SceneConfig =
        toml::Value::Table(merged).try_into().map_err(|e| CliError::usage(format!("scene file: {e}")))?;
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(config)
}

pub fn load_scene(path: &Path) -> Result<SceneConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read scene file {}: {e}", path.display())))?;
    parse_scene(&text)
}
