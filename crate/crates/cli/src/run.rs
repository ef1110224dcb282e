use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use fsal::engine::{run_experiment, ExperimentResult, Progress};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, parse_config, resolved_toml};
use crate::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULT_JSON: &str = "result.json";
pub const RESULT_CSV: &str = "result.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    pub seed_override: Option<Vec<u64>>,
    pub strict_ingest: bool,
}

/// Wall-clock time of one training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTiming {
    pub seed: u64,
    pub round: usize,
    pub seconds: f64,
}

/// Provenance of one run. The only output that carries timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub config_hash: String,
    pub engine_version: String,
    pub started_at: String,
    #[serde(default)]
    pub finished_at: Option<String>,
    #[serde(default)]
    pub pretrain_seconds: Vec<(u64, f64)>,
    #[serde(default)]
    pub round_seconds: Vec<RoundTiming>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    write(path, text)
}

/// Output directory of a config under `out_root`: `<name>-<hash prefix>`.
pub fn output_dir_for(out_root: &Path, name: &str, hash: &str) -> PathBuf {
    let safe: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    out_root.join(format!("{safe}-{}", &hash[..12]))
}

/// Flat table: `seed,round,labeled_count,test_accuracy` and one accuracy
/// column per alphabet letter (empty when the letter has no test items).
pub fn result_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("seed,round,labeled_count,test_accuracy");
    for letter in &result.corpus.alphabet {
        out.push(',');
        out.push_str(letter);
    }
    out.push('\n');
    for replica in &result.replicas {
        for r in &replica.rounds {
            let _ = write!(
                out,
                "{},{},{},{}",
                replica.seed, r.round, r.labeled_count, r.test_accuracy
            );
            for acc in &r.per_class_accuracy {
                out.push(',');
                if let Some(a) = acc {
                    let _ = write!(out, "{a}");
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn read_result(path: &Path) -> Result<ExperimentResult> {
    let path = if path.is_dir() {
        path.join(RESULT_JSON)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json { path, source: e })
}

/// Runs the experiment of `config_path`, writing the manifest, resolved
/// config, result JSON and CSV into a fresh hash-suffixed directory under
/// `out_root`. Returns that directory.
pub fn cmd_run(config_path: &Path, out_root: &Path, opts: &RunOptions) -> Result<PathBuf> {
    let mut config = parse_config(config_path)?;
    if let Some(seeds) = &opts.seed_override {
        config.seeds = seeds.clone();
        config.validate().map_err(|e| CliError::Config {
            path: config_path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    let hash = config_hash(&config)?;
    let dir = output_dir_for(out_root, &config.name, &hash);
    if dir.exists() && !opts.force {
        return Err(CliError::Exists(dir));
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut manifest = RunManifest {
        config_path: config_path.to_path_buf(),
        output_dir: dir.clone(),
        config_hash: hash,
        engine_version: fsal::ENGINE_VERSION.to_string(),
        started_at: now(),
        finished_at: None,
        pretrain_seconds: Vec::new(),
        round_seconds: Vec::new(),
    };
    write_json(&manifest_path, &manifest)?;
    write(&dir.join(RESOLVED_CONFIG), resolved_toml(&config)?)?;
    for stale in [RESULT_JSON, RESULT_CSV] {
        let p = dir.join(stale);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
        }
    }

    info!("running {} into {}", config.name, dir.display());
    let mut clock = Instant::now();
    let mut observer = |p: Progress<'_>| {
        let seconds = clock.elapsed().as_secs_f64();
        clock = Instant::now();
        match p {
            Progress::Pretrained { seed, steps } => {
                info!("seed {seed}: pre-trained for {steps} steps");
                manifest.pretrain_seconds.push((seed, seconds));
            }
            Progress::Round { seed, record } => {
                info!(
                    "seed {seed} round {}: {} labels, test accuracy {:.4}",
                    record.round, record.labeled_count, record.test_accuracy
                );
                manifest.round_seconds.push(RoundTiming {
                    seed,
                    round: record.round,
                    seconds,
                });
            }
        }
    };
    let result = run_experiment(&config, opts.strict_ingest, &mut observer)?;

    write_json(&dir.join(RESULT_JSON), &result)?;
    write(&dir.join(RESULT_CSV), result_csv(&result))?;
    manifest.finished_at = Some(now());
    write_json(&manifest_path, &manifest)?;
    Ok(dir)
}
