use std::fs;
use std::path::{Path, PathBuf};

use fsal::engine::ExperimentConfig;
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

/// Parses a TOML experiment config.
///
/// Unknown keys are rejected. Relative corpus and frequency-table paths are
/// resolved against the config file's directory, and every default is
/// materialized in the returned config.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        CliError::Config { message, .. } => CliError::Config {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses config text, resolving relative paths against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let config_error = |message: String| CliError::Config {
        path: PathBuf::from("<config>"),
        message,
    };
    let de = toml::Deserializer::new(text);
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.message().to_string();
        let location = inner
            .span()
            .map(|s| {
                let line = text[..s.start].matches('\n').count() + 1;
                format!(" (line {line})")
            })
            .unwrap_or_default();
        if key == "." {
            config_error(format!("{message}{location}"))
        } else {
            config_error(format!("at `{key}`: {message}{location}"))
        }
    })?;
    for p in config.paths_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    for f in config.frequency_paths_mut() {
        if Path::new(f.as_str()).is_relative() {
            *f = base.join(&*f).to_string_lossy().into_owned();
        }
    }
    config.validate().map_err(|e| config_error(e.to_string()))?;
    Ok(config)
}

/// The resolved config as TOML, with every default written out.
pub fn resolved_toml(config: &ExperimentConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| CliError::Config {
        path: PathBuf::from("<resolved>"),
        message: e.to_string(),
    })
}

/// SHA-256 of the resolved config, hex encoded.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(resolved_toml(config)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
