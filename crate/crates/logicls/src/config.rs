//! Shared runtime configuration for the CLI. A config file (TOML, or
//! JSON for `.json` paths) supplies defaults; command-line flags
//! override individual fields. The file is found via `--config` or,
//! failing that, the `LOGICLS_CONFIG` environment variable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::UnanswerablePolicy;
use crate::answer::RemoteConfig;

pub const CONFIG_ENV_VAR: &str = "LOGICLS_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("bad config {path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Worker threads for parallel stages; absent means rayon's choice.
    pub jobs: Option<usize>,
    pub policy: UnanswerablePolicy,
    pub remote: RemoteConfig,
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let config: Config = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
    };
    if let Some(0) = config.jobs {
        return Err(ConfigError::Invalid {
            path: path.display().to_string(),
            message: "jobs must be >= 1".into(),
        });
    }
    Ok(config)
}

/// Explicit path wins; otherwise `LOGICLS_CONFIG`; otherwise defaults.
pub fn effective_config(explicit: Option<&Path>) -> Result<Config, ConfigError> {
    match explicit {
        Some(path) => load_config(path),
        None => match std::env::var_os(CONFIG_ENV_VAR) {
            Some(path) => load_config(Path::new(&path)),
            None => Ok(Config::default()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_sane() {
        let c = Config::default();
        assert_eq!(c.jobs, None);
        assert_eq!(c.policy, UnanswerablePolicy::Strict);
        assert_eq!(c.remote, RemoteConfig::default());
    }

    #[test]
    fn toml_and_json_both_load_with_partial_fields() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("conf.toml");
        std::fs::write(&toml_path, "jobs = 2\npolicy = \"lenient\"\n").unwrap();
        let c = load_config(&toml_path).unwrap();
        assert_eq!(c.jobs, Some(2));
        assert_eq!(c.policy, UnanswerablePolicy::Lenient);
        assert_eq!(c.remote, RemoteConfig::default());

        let json_path = dir.path().join("conf.json");
        std::fs::write(&json_path, r#"{"remote": {"retries": 5}}"#).unwrap();
        let c = load_config(&json_path).unwrap();
        assert_eq!(c.remote.retries, 5);
        assert_eq!(c.remote.timeout_ms, RemoteConfig::default().timeout_ms);
    }

    #[test]
    fn bad_configs_are_rejected_with_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conf.toml");
        std::fs::write(&path, "jobs = 0\n").unwrap();
        let err = load_config(&path).unwrap_err();
        assert!(err.to_string().contains("conf.toml"));

        std::fs::write(&path, "jobs = \"many\"\n").unwrap();
        assert!(matches!(load_config(&path), Err(ConfigError::Parse { .. })));

        assert!(matches!(
            load_config(&dir.path().join("missing.toml")),
            Err(ConfigError::Read { .. })
        ));
    }

    #[test]
    fn explicit_path_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conf.toml");
        std::fs::write(&path, "jobs = 7\n").unwrap();
        let c = effective_config(Some(&path)).unwrap();
        assert_eq!(c.jobs, Some(7));
    }
}
