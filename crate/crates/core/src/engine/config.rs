use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{EngineError, Result};
use crate::acquisition::AcquisitionFn;
use crate::data::{
    default_alphabet, load_csv_corpus, load_image_dir, resample_to_letter_frequency,
    synthetic_corpus, validate_alphabet, Corpus, FrequencyTable, SyntheticSpec,
};
use crate::nn::{ArchSpec, TrainConfig};

/// Name of the bundled frequency table.
pub const ENGLISH_TABLE: &str = "english";

/// Where a corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSource {
    /// Header row, then `label,pixel1..pixelN` rows with 0-255 intensities.
    Csv {
        path: PathBuf,
    },
    /// `<path>/<LETTER>/<image>` directory tree.
    ImageDir {
        path: PathBuf,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    /// Defaults to the CSV file stem, the image directory name, or `synthetic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub source: CorpusSource,
    #[serde(default = "default_alphabet")]
    pub alphabet: Vec<String>,
    /// `"english"` or a path to a `LETTER,probability` file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<String>,
    /// Size after resampling; defaults to the source size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_size: Option<usize>,
    #[serde(default)]
    pub resample_seed: u64,
}

impl CorpusSpec {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            name: None,
            source: CorpusSource::Synthetic(spec),
            alphabet: default_alphabet(),
            frequency: None,
            resample_size: None,
            resample_seed: 0,
        }
    }

    fn validate(&self, key: &str) -> Result<()> {
        validate_alphabet(&self.alphabet)
            .map_err(|e| EngineError::config(format!("{key}.alphabet"), e.to_string()))?;
        if self.resample_size.is_some() && self.frequency.is_none() {
            return Err(EngineError::config(
                format!("{key}.resample_size"),
                "requires a frequency table",
            ));
        }
        if self.resample_size == Some(0) {
            return Err(EngineError::config(
                format!("{key}.resample_size"),
                "must be >= 1",
            ));
        }
        Ok(())
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match &mut self.source {
            CorpusSource::Csv { path } | CorpusSource::ImageDir { path } => vec![path],
            CorpusSource::Synthetic(_) => Vec::new(),
        }
    }

    /// Loads the source, standardizes it to `resolution` and applies the
    /// frequency resampling if one is configured.
    pub fn load(&self, resolution: usize, strict: bool) -> Result<Corpus> {
        let mut corpus = match &self.source {
            CorpusSource::Csv { path } => load_csv_corpus(path, &self.alphabet)?,
            CorpusSource::ImageDir { path } => {
                load_image_dir(path, resolution, &self.alphabet, strict)?
            }
            CorpusSource::Synthetic(spec) => synthetic_corpus("synthetic", &self.alphabet, spec)?,
        };
        if let Some(name) = &self.name {
            corpus.name = name.clone();
        }
        let corpus = corpus.resized(resolution)?;
        match &self.frequency {
            None => Ok(corpus),
            Some(table) => {
                let table = if table == ENGLISH_TABLE {
                    FrequencyTable::english()
                } else {
                    FrequencyTable::load(table)?
                };
                let size = self.resample_size.unwrap_or(corpus.len());
                Ok(resample_to_letter_frequency(
                    &corpus,
                    &table,
                    size,
                    self.resample_seed,
                )?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_initial_per_class")]
    pub initial_per_class: usize,
}

fn default_test_fraction() -> f64 {
    0.1
}

fn default_initial_per_class() -> usize {
    2
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: default_test_fraction(),
            initial_per_class: default_initial_per_class(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    #[serde(default = "default_function")]
    pub function: AcquisitionFn,
    /// Stochastic forward passes; 1 means a single deterministic pass.
    #[serde(default = "default_passes")]
    pub passes: usize,
}

fn default_function() -> AcquisitionFn {
    AcquisitionFn::VariationRatio
}

fn default_passes() -> usize {
    20
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            function: default_function(),
            passes: default_passes(),
        }
    }
}

/// Auxiliary corpus the model is trained on once before the AL rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seeds: Vec<u64>,
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default = "default_query_size")]
    pub query_size: usize,
    /// Acquisition rounds; when absent, enough rounds to label
    /// `label_fraction` of the pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default = "default_label_fraction")]
    pub label_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<PretrainConfig>,
    #[serde(default)]
    pub arch: ArchSpec,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_query_size() -> usize {
    10
}

fn default_label_fraction() -> f64 {
    0.15
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(corpus: CorpusSpec, seeds: Vec<u64>) -> Self {
        Self {
            name: default_name(),
            seeds,
            corpus,
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            acquisition: AcquisitionConfig::default(),
            query_size: default_query_size(),
            rounds: None,
            label_fraction: default_label_fraction(),
            pretrain: None,
            arch: ArchSpec::default(),
        }
    }

    /// Checks every constraint that does not need the corpus loaded.
    /// Errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(EngineError::config("name", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(EngineError::config("seeds", "must list at least one seed"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(EngineError::config("seeds", "contains duplicates"));
        }
        self.corpus.validate("corpus")?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(EngineError::config(
                "split.test_fraction",
                "must lie in (0, 1)",
            ));
        }
        self.train
            .validate()
            .map_err(|e| EngineError::config("train", e.to_string()))?;
        if self.acquisition.passes == 0 {
            return Err(EngineError::config("acquisition.passes", "must be >= 1"));
        }
        if self.query_size == 0 {
            return Err(EngineError::config("query_size", "must be >= 1"));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(EngineError::config("label_fraction", "must lie in (0, 1]"));
        }
        self.arch
            .validate()
            .map_err(|e| EngineError::config("arch", e.to_string()))?;
        if self.arch.class_count != self.corpus.alphabet.len() {
            return Err(EngineError::config(
                "arch.class_count",
                format!(
                    "{} does not match the {}-letter corpus alphabet",
                    self.arch.class_count,
                    self.corpus.alphabet.len()
                ),
            ));
        }
        if let Some(pre) = &self.pretrain {
            pre.corpus.validate("pretrain.corpus")?;
            if pre.corpus.alphabet.len() < 2 {
                return Err(EngineError::config(
                    "pretrain.corpus.alphabet",
                    "needs at least 2 letters to train a classifier",
                ));
            }
            pre.train
                .validate()
                .map_err(|e| EngineError::config("pretrain.train", e.to_string()))?;
        }
        Ok(())
    }

    /// Rounds to run for a pool of `pool_size` items.
    ///
    /// An explicit `rounds` may overshoot the pool by at most one partial
    /// round, which is then truncated.
    pub fn planned_rounds(&self, pool_size: usize) -> Result<usize> {
        let max = pool_size.div_ceil(self.query_size);
        match self.rounds {
            Some(r) if r > max => Err(EngineError::config(
                "rounds",
                format!(
                    "{r} rounds of {} exceed the pool of {pool_size} items (at most {max})",
                    self.query_size
                ),
            )),
            Some(r) => Ok(r),
            None => {
                let budget = (self.label_fraction * pool_size as f64).ceil() as usize;
                Ok(budget.div_ceil(self.query_size).min(max))
            }
        }
    }

    /// Every file path in the config, for resolving relative paths.
    pub fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut out = self.corpus.paths_mut();
        if let Some(pre) = &mut self.pretrain {
            out.extend(pre.corpus.paths_mut());
        }
        out
    }

    /// Frequency table paths (other than the bundled table), for resolving
    /// relative paths.
    pub fn frequency_paths_mut(&mut self) -> Vec<&mut String> {
        let mut out: Vec<&mut String> = self.corpus.frequency.iter_mut().collect();
        if let Some(pre) = &mut self.pretrain {
            out.extend(pre.corpus.frequency.iter_mut());
        }
        out.retain(|f| f.as_str() != ENGLISH_TABLE);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::new(CorpusSpec::synthetic(SyntheticSpec::new(10, 0)), vec![1])
    }

    #[test]
    fn defaults_validate() {
        config().validate().unwrap();
    }

    #[test]
    fn violations_name_their_key() {
        let mut c = config();
        c.split.test_fraction = 1.5;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("split.test_fraction"));
        let mut c = config();
        c.arch.class_count = 22;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("arch.class_count"));
        let mut c = config();
        c.seeds.clear();
        assert!(c.validate().unwrap_err().to_string().contains("seeds"));
    }

    #[test]
    fn planned_rounds() {
        let mut c = config();
        c.query_size = 10;
        // 15% of 1000 = 150 labels = 15 rounds.
        assert_eq!(c.planned_rounds(1000).unwrap(), 15);
        assert_eq!(c.planned_rounds(101).unwrap(), 2);
        c.rounds = Some(11);
        assert_eq!(c.planned_rounds(101).unwrap(), 11);
        c.rounds = Some(12);
        assert!(c.planned_rounds(101).is_err());
    }
}
