//! Command-line front end: config parsing, experiment runs and SVG reports.

mod config;
mod run;
mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{config_hash, parse_config, parse_config_str, resolved_toml};
pub use run::{
    cmd_run, output_dir_for, read_result, result_csv, RoundTiming, RunManifest, RunOptions,
    MANIFEST_FILE, RESOLVED_CONFIG, RESULT_CSV, RESULT_JSON,
};
pub use svg::{
    cmd_gap_chart, cmd_plot, curve, gap_chart_svg, learning_curve_svg, parse_shared_letters,
    CurvePoint,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("output directory {0} already exists (pass --force to overwrite)")]
    Exists(PathBuf),
    #[error("{0}")]
    Render(String),
    #[error(transparent)]
    Engine(#[from] fsal::engine::EngineError),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
