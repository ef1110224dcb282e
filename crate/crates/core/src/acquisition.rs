//! Uncertainty scoring over the unlabeled pool and top-B batch selection.
//!
//! All scores are in nats. `variation_ratio` and `max_entropy` use the
//! per-item mean over the stochastic passes; `bald` and `mean_std` use the
//! spread between passes.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{forward, ForwardMode, ModelParams, NnError};
use crate::seed;

const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("pool is empty")]
    EmptyPool,
    #[error("number of passes must be >= 1")]
    NoPasses,
    #[error("batch size {batch} exceeds pool size {pool}")]
    BatchTooLarge { batch: usize, pool: usize },
    #[error("unknown acquisition function {0:?}")]
    UnknownFunction(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T, E = AcquisitionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionFn {
    VariationRatio,
    MaxEntropy,
    Bald,
    MeanStd,
    Random,
}

impl AcquisitionFn {
    pub const ALL: [AcquisitionFn; 5] = [
        AcquisitionFn::VariationRatio,
        AcquisitionFn::MaxEntropy,
        AcquisitionFn::Bald,
        AcquisitionFn::MeanStd,
        AcquisitionFn::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AcquisitionFn::VariationRatio => "variation_ratio",
            AcquisitionFn::MaxEntropy => "max_entropy",
            AcquisitionFn::Bald => "bald",
            AcquisitionFn::MeanStd => "mean_std",
            AcquisitionFn::Random => "random",
        }
    }
}

impl fmt::Display for AcquisitionFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionFn {
    type Err = AcquisitionError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| AcquisitionError::UnknownFunction(s.to_string()))
    }
}

/// Class probabilities from `T` forward passes over `M` pool items,
/// indexed `[t, m, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSamples {
    pub probs: Array3<f64>,
    /// Dropout seed of each pass; `None` for a deterministic pass.
    pub pass_seeds: Vec<Option<u64>>,
}

impl PredictiveSamples {
    /// Wraps precomputed probabilities (for instance from another model).
    pub fn from_probs(probs: Array3<f64>) -> Self {
        let passes = probs.shape()[0];
        Self {
            probs,
            pass_seeds: vec![None; passes],
        }
    }

    pub fn passes(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn pool_len(&self) -> usize {
        self.probs.shape()[1]
    }

    /// Per-item mean over passes (`M x K`).
    pub fn mean(&self) -> Array2<f64> {
        self.probs.mean_axis(Axis(0)).expect("at least one pass")
    }
}

/// Runs `passes` forward passes over the pool.
///
/// With one pass, dropout is off and the pass is deterministic. With more,
/// pass `t` draws its dropout masks from `seed ^ t`.
pub fn predictive_samples(
    params: &ModelParams,
    pool: &[&[f64]],
    passes: usize,
    seed: u64,
) -> Result<PredictiveSamples> {
    if pool.is_empty() {
        return Err(AcquisitionError::EmptyPool);
    }
    if passes == 0 {
        return Err(AcquisitionError::NoPasses);
    }
    let k = params.arch.class_count;
    let mut probs = Array3::zeros((passes, pool.len(), k));
    let mut pass_seeds = Vec::with_capacity(passes);
    for t in 0..passes {
        let mode = if passes == 1 {
            ForwardMode::Deterministic
        } else {
            ForwardMode::Stochastic(seed ^ t as u64)
        };
        pass_seeds.push(match mode {
            ForwardMode::Deterministic => None,
            ForwardMode::Stochastic(s) => Some(s),
        });
        for (c, chunk) in pool.chunks(CHUNK).enumerate() {
            // Masks are keyed by batch position, so each chunk gets its own
            // sub-seed to keep items from sharing masks.
            let chunk_mode = match mode {
                ForwardMode::Stochastic(s) if c > 0 => {
                    ForwardMode::Stochastic(seed::derive(s, c as u64))
                }
                m => m,
            };
            let p = forward(params, chunk, chunk_mode)?;
            let start = c * CHUNK;
            probs
                .slice_mut(s![t, start..start + chunk.len(), ..])
                .assign(&p);
        }
    }
    Ok(PredictiveSamples { probs, pass_seeds })
}

/// Scores of one acquisition function over the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub function: AcquisitionFn,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn entropy(row: impl IntoIterator<Item = f64>) -> f64 {
    -row.into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// `1 - max_k p[m, k]`.
pub fn variation_ratio(mean_probs: ArrayView2<f64>) -> ScoreVector {
    let scores = mean_probs
        .rows()
        .into_iter()
        .map(|row| 1.0 - row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    ScoreVector {
        scores,
        function: AcquisitionFn::VariationRatio,
    }
}

/// Shannon entropy of each row, with `0 ln 0 = 0`.
pub fn max_entropy(mean_probs: ArrayView2<f64>) -> ScoreVector {
    let scores = mean_probs
        .rows()
        .into_iter()
        .map(|row| entropy(row.iter().copied()))
        .collect();
    ScoreVector {
        scores,
        function: AcquisitionFn::MaxEntropy,
    }
}

/// Mutual information `H[mean_t p_t] - mean_t H[p_t]`, clamped at 0.
pub fn bald(samples: &PredictiveSamples) -> ScoreVector {
    let mean = samples.mean();
    let t = samples.passes() as f64;
    let scores = (0..samples.pool_len())
        .map(|m| {
            let passes = samples.probs.index_axis(Axis(1), m);
            let first = passes.row(0);
            if passes.rows().into_iter().all(|row| row == first) {
                return 0.0;
            }
            let total = entropy(mean.row(m).iter().copied());
            let expected = passes
                .rows()
                .into_iter()
                .map(|row| entropy(row.iter().copied()))
                .sum::<f64>()
                / t;
            (total - expected).max(0.0)
        })
        .collect();
    ScoreVector {
        scores,
        function: AcquisitionFn::Bald,
    }
}

/// Mean over classes of the population standard deviation across passes.
pub fn mean_std(samples: &PredictiveSamples) -> ScoreVector {
    let std = samples.probs.std_axis(Axis(0), 0.0);
    let scores = std.mean_axis(Axis(1)).expect("at least one class").to_vec();
    ScoreVector {
        scores,
        function: AcquisitionFn::MeanStd,
    }
}

/// Scores the pool with any of the four uncertainty functions.
///
/// # Panics
/// On [`AcquisitionFn::Random`], which has no scores; use [`random_select`].
pub fn score(function: AcquisitionFn, samples: &PredictiveSamples) -> ScoreVector {
    match function {
        AcquisitionFn::VariationRatio => variation_ratio(samples.mean().view()),
        AcquisitionFn::MaxEntropy => max_entropy(samples.mean().view()),
        AcquisitionFn::Bald => bald(samples),
        AcquisitionFn::MeanStd => mean_std(samples),
        AcquisitionFn::Random => panic!("random acquisition has no scores"),
    }
}

/// Indices of the `batch` highest scores, ties going to the lower index,
/// returned in ascending order.
pub fn select_batch(scores: &ScoreVector, batch: usize) -> Result<Vec<usize>> {
    let pool = scores.len();
    if batch > pool {
        return Err(AcquisitionError::BatchTooLarge { batch, pool });
    }
    let mut order: Vec<usize> = (0..pool).collect();
    let by_score = |a: &usize, b: &usize| {
        scores.scores[*b]
            .total_cmp(&scores.scores[*a])
            .then(a.cmp(b))
    };
    if batch < pool {
        order.select_nth_unstable_by(batch, by_score);
    }
    let mut picked = order[..batch].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// `batch` distinct indices drawn uniformly from `0..pool`, ascending.
pub fn random_select(pool: usize, batch: usize, seed: u64) -> Result<Vec<usize>> {
    if batch > pool {
        return Err(AcquisitionError::BatchTooLarge { batch, pool });
    }
    let mut picked = index::sample(&mut seed::rng(seed), pool, batch).into_vec();
    picked.sort_unstable();
    Ok(picked)
}
