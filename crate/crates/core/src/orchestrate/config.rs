//! Run configuration: flat `key = value` text, or a JSON object.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("config error at `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub project_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_file: Option<PathBuf>,
    pub library_name: String,
    pub current_version: String,
    pub target_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_env_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_env_path: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub dry_run: bool,
    #[serde(default)]
    pub static_only: bool,
    #[serde(default)]
    pub rng_seed: u64,
    /// Source tree of the current library version, for the static index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_library_source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_library_source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar_script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_cache_dir: Option<PathBuf>,
    /// Worker threads for per-file tasks; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    /// JSON file of API pairs with base values, for `bench`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench_apis: Option<PathBuf>,
    /// Where `bench` writes its corpus (JSON lines).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench_corpus: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

const BOOL_KEYS: [&str; 2] = ["dry_run", "static_only"];
const INT_KEYS: [&str; 2] = ["rng_seed", "parallelism"];

impl RunConfig {
    /// Check cross-field constraints that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, value) in [
            ("library_name", &self.library_name),
            ("current_version", &self.current_version),
            ("target_version", &self.target_version),
        ] {
            if value.trim().is_empty() {
                return Err(ConfigError::new(key, "must not be empty"));
            }
        }
        if self.current_version == self.target_version {
            return Err(ConfigError::new("target_version", "must differ from current_version"));
        }
        if self.static_only {
            if self.current_library_source.is_none() {
                return Err(ConfigError::new("current_library_source", "required when static_only is true"));
            }
            if self.target_library_source.is_none() {
                return Err(ConfigError::new("target_library_source", "required when static_only is true"));
            }
        } else {
            if self.current_env_path.is_none() {
                return Err(ConfigError::new("current_env_path", "required unless static_only is true"));
            }
            if self.target_env_path.is_none() {
                return Err(ConfigError::new("target_env_path", "required unless static_only is true"));
            }
            if self.sidecar_script.is_none() {
                return Err(ConfigError::new("sidecar_script", "required unless static_only is true"));
            }
        }
        Ok(())
    }

    /// Resolve relative paths against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.project_path);
        for p in [
            &mut self.entry_file,
            &mut self.current_env_path,
            &mut self.target_env_path,
            &mut self.current_library_source,
            &mut self.target_library_source,
            &mut self.sidecar_script,
            &mut self.index_cache_dir,
            &mut self.bench_apis,
            &mut self.bench_corpus,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Render as `key = value` lines that `parse_config` reads back.
    pub fn to_kv(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                let text = match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                out.push_str(&format!("{k} = {text}\n"));
            }
        }
        out
    }
}

/// Parse config text; JSON when it starts with `{`, otherwise `key = value`
/// lines with `#` comments.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value = if text.trim_start().starts_with('{') {
        serde_json::from_str::<serde_json::Value>(text).map_err(|e| ConfigError::new("<root>", e.to_string()))?
    } else {
        kv_to_json(text)?
    };
    let config: RunConfig = serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        let key = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
            .unwrap_or("<root>")
            .to_string();
        ConfigError::new(key, msg)
    })?;
    config.validate()?;
    Ok(config)
}

fn kv_to_json(text: &str) -> Result<serde_json::Value, ConfigError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::new(format!("line {}", n + 1), "expected `key = value`"));
        };
        let key = key.trim().to_string();
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        let json = if BOOL_KEYS.contains(&key.as_str()) {
            match value {
                "true" => serde_json::Value::Bool(true),
                "false" => serde_json::Value::Bool(false),
                _ => return Err(ConfigError::new(key, format!("expected true or false, got `{value}`"))),
            }
        } else if INT_KEYS.contains(&key.as_str()) {
            let n: u64 = value
                .parse()
                .map_err(|_| ConfigError::new(key.clone(), format!("expected an integer, got `{value}`")))?;
            serde_json::Value::from(n)
        } else {
            serde_json::Value::String(value.to_string())
        };
        if map.insert(key.clone(), json).is_some() {
            return Err(ConfigError::new(key, "duplicate key"));
        }
    }
    Ok(serde_json::Value::Object(map.into_iter().collect()))
}

/// Read and parse a config file, resolving relative paths against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
    let mut config = parse_config(&text)?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(config)
}
