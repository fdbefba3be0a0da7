//! Flat `key = value` configuration files. Blank lines and `#` comments are
//! ignored; keys are the simulator keys accepted by [`SimConfig::set`].

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::pipeline::{ConfigError, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("{path}:{line}: {source}")]
    Value {
        path: String,
        line: usize,
        source: ConfigError,
    },
}

pub fn parse_config(text: &str, path: &str) -> Result<SimConfig, ConfigFileError> {
    let mut cfg = SimConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigFileError::Syntax {
            path: path.to_string(),
            line: n + 1,
        })?;
        cfg.set(k.trim(), v.trim()).map_err(|source| ConfigFileError::Value {
            path: path.to_string(),
            line: n + 1,
            source,
        })?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig, ConfigFileError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: name.clone(),
        source,
    })?;
    parse_config(&text, &name)
}
