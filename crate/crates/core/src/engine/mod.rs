//! The active-learning loop: optional pre-training on an auxiliary corpus,
//! then rounds of retrain-from-scratch, evaluation and pool acquisition.

mod config;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    AcquisitionConfig, CorpusSource, CorpusSpec, ExperimentConfig, PretrainConfig, SplitConfig,
    ENGLISH_TABLE,
};
pub use report::{per_class_gap_report, GapReport};

use crate::acquisition::{
    predictive_samples, random_select, score, select_batch, AcquisitionError, AcquisitionFn,
};
use crate::data::{make_splits, Corpus, DataError, LabeledImage, PoolState, SplitSpec};
use crate::nn::{
    evaluate, init_model, reinit_head_for, train, Evaluation, ModelParams, NnError, Trained,
};
use crate::seed::{self, salt};

/// Version of the JSON result layout.
pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("report: {0}")]
    Report(String),
}

impl EngineError {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        EngineError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub name: String,
    pub alphabet: Vec<String>,
    pub resolution: usize,
    pub size: usize,
    pub class_counts: Vec<usize>,
}

impl CorpusSummary {
    pub fn of(corpus: &Corpus) -> Self {
        Self {
            name: corpus.name.clone(),
            alphabet: corpus.alphabet.clone(),
            resolution: corpus.resolution,
            size: corpus.len(),
            class_counts: corpus.class_counts(),
        }
    }
}

/// Metrics of one round, recorded after training and before acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    /// Indexed by alphabet position; `None` for letters absent from test.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Pool indices acquired after this round's evaluation.
    pub selected: Vec<usize>,
    pub train_steps: usize,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub seed: u64,
    pub pool_size: usize,
    pub test_size: usize,
    /// Set when the pool ran out and the last acquisition was short.
    pub truncated: bool,
    /// Optimizer steps spent on the pre-training corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain_steps: Option<usize>,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub engine_version: String,
    pub config: ExperimentConfig,
    pub corpus: CorpusSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain_corpus: Option<CorpusSummary>,
    pub planned_rounds: usize,
    pub replicas: Vec<ReplicaResult>,
}

/// Progress notification passed to the observer of [`run_on_corpus`].
#[derive(Debug, Clone, Copy)]
pub enum Progress<'a> {
    Pretrained { seed: u64, steps: usize },
    Round { seed: u64, record: &'a RoundRecord },
}

/// Seed of the fresh initialization used in `round` of replica `seed`.
pub fn round_init_seed(seed: u64, round: usize) -> u64 {
    seed::derive_all(seed, &[salt::MODEL_INIT, round as u64])
}

fn round_train_seed(seed: u64, round: usize, base: u64) -> u64 {
    seed::derive_all(seed, &[salt::TRAIN, round as u64, base])
}

fn acquisition_seed(seed: u64, round: usize) -> u64 {
    seed::derive_all(seed, &[salt::ACQUIRE, round as u64])
}

fn split_spec(config: &ExperimentConfig, seed: u64) -> SplitSpec {
    SplitSpec {
        test_fraction: config.split.test_fraction,
        initial_per_class: config.split.initial_per_class,
        seed,
    }
}

fn columns(items: &[LabeledImage]) -> (Vec<&[f64]>, Vec<usize>) {
    items.iter().map(|i| (i.pixels.as_slice(), i.label)).unzip()
}

/// Simulated oracle: reveals the label of a pool item and moves it into
/// the labeled set.
pub fn oracle_label(state: &mut PoolState, index: usize) -> Result<usize> {
    Ok(state.oracle_label(index)?)
}

/// Builds the split of replica `seed`.
pub fn replica_state(config: &ExperimentConfig, corpus: &Corpus, seed: u64) -> Result<PoolState> {
    Ok(make_splits(corpus, &split_spec(config, seed))?)
}

/// Trains once on the whole pre-training corpus, with a head sized to its
/// alphabet.
pub fn pretrain(config: &ExperimentConfig, source: &Corpus, seed: u64) -> Result<Trained> {
    let pre = config
        .pretrain
        .as_ref()
        .ok_or_else(|| EngineError::config("pretrain", "no pretrain section"))?;
    if source.alphabet.len() < 2 {
        return Err(EngineError::config(
            "pretrain.corpus.alphabet",
            "needs at least 2 letters to train a classifier",
        ));
    }
    if source.resolution != config.arch.input_resolution {
        return Err(EngineError::config(
            "pretrain.corpus",
            format!(
                "resolution {} does not match arch input {}",
                source.resolution, config.arch.input_resolution
            ),
        ));
    }
    let arch = config.arch.with_class_count(source.alphabet.len());
    let init = init_model(
        &arch,
        seed::derive_all(seed, &[salt::PRETRAIN, salt::MODEL_INIT]),
    )?;
    let (images, labels) = columns(&source.items);
    let cfg = pre.train.with_seed(seed::derive_all(
        seed,
        &[salt::PRETRAIN, salt::TRAIN, pre.train.seed],
    ));
    Ok(train(&init, &images, &labels, &cfg)?)
}

/// Initial parameters of `round`: the pre-trained backbone with a fresh
/// head when given, else a fresh model.
pub fn round_init(
    config: &ExperimentConfig,
    pretrained: Option<&ModelParams>,
    seed: u64,
    round: usize,
) -> Result<ModelParams> {
    let init_seed = round_init_seed(seed, round);
    Ok(match pretrained {
        Some(p) => reinit_head_for(p, config.arch.class_count, init_seed)?,
        None => init_model(&config.arch, init_seed)?,
    })
}

/// Trains the model of `round` on the current labeled set. Depends only
/// on its arguments, never on earlier rounds' parameters.
pub fn train_round(
    config: &ExperimentConfig,
    state: &PoolState,
    pretrained: Option<&ModelParams>,
    seed: u64,
    round: usize,
) -> Result<Trained> {
    let init = round_init(config, pretrained, seed, round)?;
    let (images, labels) = columns(state.labeled());
    let cfg = config
        .train
        .with_seed(round_train_seed(seed, round, config.train.seed));
    Ok(train(&init, &images, &labels, &cfg)?)
}

fn evaluate_on(params: &ModelParams, items: &[LabeledImage]) -> Result<Evaluation> {
    let (images, labels) = columns(items);
    Ok(evaluate(params, &images, &labels)?)
}

/// Picks up to `batch` pool items with the configured acquisition function.
pub fn acquire_indices(
    config: &ExperimentConfig,
    params: &ModelParams,
    state: &PoolState,
    batch: usize,
    seed: u64,
    round: usize,
) -> Result<Vec<usize>> {
    let available = state.available();
    let batch = batch.min(available.len());
    if batch == 0 {
        return Ok(Vec::new());
    }
    let acq_seed = acquisition_seed(seed, round);
    let picked = match config.acquisition.function {
        AcquisitionFn::Random => random_select(available.len(), batch, acq_seed)?,
        function => {
            let pool: Vec<&[f64]> = available
                .iter()
                .map(|&i| state.pool_features(i).expect("available index"))
                .collect();
            let samples = predictive_samples(params, &pool, config.acquisition.passes, acq_seed)?;
            select_batch(&score(function, &samples), batch)?
        }
    };
    Ok(picked.into_iter().map(|p| available[p]).collect())
}

/// Runs one replica of the AL loop.
pub fn run_replica(
    config: &ExperimentConfig,
    corpus: &Corpus,
    pretrain_corpus: Option<&Corpus>,
    seed: u64,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<ReplicaResult> {
    let mut state = replica_state(config, corpus, seed)?;
    let rounds = config.planned_rounds(state.pool_len())?;
    let (pretrained, pretrain_steps) = match (&config.pretrain, pretrain_corpus) {
        (Some(_), Some(source)) => {
            let trained = pretrain(config, source, seed)?;
            observer(Progress::Pretrained {
                seed,
                steps: trained.steps,
            });
            (Some(trained.params), Some(trained.steps))
        }
        (Some(_), None) => {
            return Err(EngineError::config(
                "pretrain",
                "pre-training corpus not loaded",
            ))
        }
        (None, _) => (None, None),
    };

    let mut records = Vec::with_capacity(rounds + 1);
    let mut truncated = false;
    for round in 0..=rounds {
        let trained = train_round(config, &state, pretrained.as_ref(), seed, round)?;
        let eval = evaluate_on(&trained.params, state.test())?;
        let selected = if round < rounds {
            let picked = acquire_indices(
                config,
                &trained.params,
                &state,
                config.query_size,
                seed,
                round,
            )?;
            truncated |= picked.len() < config.query_size;
            for &i in &picked {
                oracle_label(&mut state, i)?;
            }
            state.finish_round();
            picked
        } else {
            Vec::new()
        };
        let record = RoundRecord {
            round,
            labeled_count: state.labeled().len() - selected.len(),
            test_accuracy: eval.accuracy,
            per_class_accuracy: eval.per_class,
            selected,
            train_steps: trained.steps,
            final_train_loss: trained.epoch_losses.last().copied().unwrap_or(f64::NAN),
        };
        observer(Progress::Round {
            seed,
            record: &record,
        });
        records.push(record);
    }
    Ok(ReplicaResult {
        seed,
        pool_size: state.pool_len(),
        test_size: state.test().len(),
        truncated,
        pretrain_steps,
        rounds: records,
    })
}

/// Runs every seed of `config` on already loaded corpora.
pub fn run_on_corpus(
    config: &ExperimentConfig,
    corpus: &Corpus,
    pretrain_corpus: Option<&Corpus>,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<ExperimentResult> {
    config.validate()?;
    if corpus.alphabet.len() != config.arch.class_count {
        return Err(EngineError::config(
            "arch.class_count",
            format!(
                "{} does not match the {}-letter corpus",
                config.arch.class_count,
                corpus.alphabet.len()
            ),
        ));
    }
    if corpus.resolution != config.arch.input_resolution {
        return Err(EngineError::config(
            "arch.input_resolution",
            format!(
                "{} does not match corpus resolution {}",
                config.arch.input_resolution, corpus.resolution
            ),
        ));
    }
    let mut replicas = Vec::with_capacity(config.seeds.len());
    let mut planned_rounds = 0;
    for &seed in &config.seeds {
        let replica = run_replica(config, corpus, pretrain_corpus, seed, observer)?;
        planned_rounds = replica.rounds.len() - 1;
        replicas.push(replica);
    }
    Ok(ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        engine_version: crate::ENGINE_VERSION.to_string(),
        config: config.clone(),
        corpus: CorpusSummary::of(corpus),
        pretrain_corpus: pretrain_corpus.map(CorpusSummary::of),
        planned_rounds,
        replicas,
    })
}

/// Loaded target and (optional) pre-training corpora of a config.
pub fn load_corpora(config: &ExperimentConfig, strict: bool) -> Result<(Corpus, Option<Corpus>)> {
    let resolution = config.arch.input_resolution;
    let corpus = config.corpus.load(resolution, strict)?;
    let pretrain = match &config.pretrain {
        Some(pre) => Some(pre.corpus.load(resolution, strict)?),
        None => None,
    };
    Ok((corpus, pretrain))
}

/// Loads the configured corpora and runs the experiment.
pub fn run_experiment(
    config: &ExperimentConfig,
    strict: bool,
    observer: &mut dyn FnMut(Progress<'_>),
) -> Result<ExperimentResult> {
    config.validate()?;
    let (corpus, pretrain) = load_corpora(config, strict)?;
    run_on_corpus(config, &corpus, pretrain.as_ref(), observer)
}

/// Test accuracy of a model trained on the whole labeled set plus the
/// whole pool of replica `seed`: the ceiling the AL curve is compared to.
pub fn full_data_evaluation(
    config: &ExperimentConfig,
    corpus: &Corpus,
    seed: u64,
) -> Result<Evaluation> {
    let mut state = replica_state(config, corpus, seed)?;
    for i in 0..state.pool_len() {
        oracle_label(&mut state, i)?;
    }
    state.finish_round();
    let trained = train_round(config, &state, None, seed, usize::MAX)?;
    evaluate_on(&trained.params, state.test())
}
