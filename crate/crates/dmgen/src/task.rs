//! Resolving task specs by built-in name or from TOML / JSON files.

use std::fs;
use std::path::Path;

use dmgen_core::scene::builtin;
use dmgen_core::TaskSpec;

use crate::error::TaskError;

/// Looks `name` up among the built-ins, then as a `.toml` or `.json` file.
pub fn resolve(name: &str) -> Result<TaskSpec, TaskError> {
    let spec = match builtin::by_name(name) {
        Some(spec) => spec,
        None if Path::new(name).is_file() => load(Path::new(name))?,
        None => {
            return Err(TaskError::Unknown { name: name.to_string(), available: builtin::NAMES.join(", ") });
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Parses a spec file; JSON when the extension says so, TOML otherwise.
pub fn load(path: &Path) -> Result<TaskSpec, TaskError> {
    let text = fs::read_to_string(path).map_err(|source| TaskError::Io { path: path.to_path_buf(), source })?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| TaskError::Parse { path: path.to_path_buf(), message })
}

pub fn to_toml(spec: &TaskSpec) -> String {
    toml::to_string(spec).expect("task specs always serialize")
}
