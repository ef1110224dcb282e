use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Corpus, DataError, LabeledImage, Result};
use crate::seed;

/// Stratified hold-out plus per-class initial labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    #[serde(default = "default_initial_per_class")]
    pub initial_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_initial_per_class() -> usize {
    2
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(DataError::Split(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        Ok(())
    }

    fn test_count(&self, available: usize) -> usize {
        let floor = (available as f64 * self.test_fraction).floor() as usize;
        if floor == 0 && available > self.initial_per_class {
            1
        } else {
            floor
        }
    }
}

/// Labeled set, unlabeled pool and test set of one experiment replica.
///
/// Pool labels are private to this type: the only way to read one is
/// [`PoolState::oracle_label`], which also moves the item into the labeled
/// set. Pool indices are stable for the lifetime of the state.
#[derive(Debug, Clone)]
pub struct PoolState {
    labeled: Vec<LabeledImage>,
    labeled_origin: Vec<usize>,
    pool_features: Vec<Vec<f64>>,
    hidden_labels: Vec<usize>,
    pool_origin: Vec<usize>,
    acquired: Vec<bool>,
    acquired_order: Vec<(usize, usize)>,
    test: Vec<LabeledImage>,
    test_origin: Vec<usize>,
    round: usize,
}

impl PoolState {
    pub fn labeled(&self) -> &[LabeledImage] {
        &self.labeled
    }

    pub fn test(&self) -> &[LabeledImage] {
        &self.test
    }

    /// Total pool size, including items already acquired.
    pub fn pool_len(&self) -> usize {
        self.pool_features.len()
    }

    pub fn pool_features(&self, index: usize) -> Option<&[f64]> {
        self.pool_features.get(index).map(Vec::as_slice)
    }

    /// Indices still in the pool, ascending.
    pub fn available(&self) -> Vec<usize> {
        (0..self.pool_len())
            .filter(|&i| !self.acquired[i])
            .collect()
    }

    pub fn available_len(&self) -> usize {
        self.acquired.iter().filter(|a| !**a).count()
    }

    pub fn is_available(&self, index: usize) -> bool {
        index < self.pool_len() && !self.acquired[index]
    }

    /// `(round, pool index)` of every acquisition so far, in order.
    pub fn acquired_order(&self) -> &[(usize, usize)] {
        &self.acquired_order
    }

    /// Acquisition round that the next oracle query is attributed to.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Closes the current acquisition round.
    pub fn finish_round(&mut self) {
        self.round += 1;
    }

    /// Corpus positions of the labeled, pool and test items.
    pub fn origins(&self) -> (&[usize], &[usize], &[usize]) {
        (&self.labeled_origin, &self.pool_origin, &self.test_origin)
    }

    /// Reveals the label of pool item `index`, marks it acquired in the
    /// current round and moves it into the labeled set. Each index can be
    /// queried once.
    pub fn oracle_label(&mut self, index: usize) -> Result<usize> {
        if index >= self.pool_len() {
            return Err(DataError::Oracle(format!(
                "pool index {index} out of range (pool size {})",
                self.pool_len()
            )));
        }
        if self.acquired[index] {
            return Err(DataError::Oracle(format!(
                "pool index {index} already acquired"
            )));
        }
        self.acquired[index] = true;
        self.acquired_order.push((self.round, index));
        let label = self.hidden_labels[index];
        self.labeled.push(LabeledImage {
            pixels: self.pool_features[index].clone(),
            label,
        });
        self.labeled_origin.push(self.pool_origin[index]);
        Ok(label)
    }
}

/// Splits a corpus into test, initial labeled set and pool.
///
/// Per class (alphabet order): shuffle, hold out `floor(n * test_fraction)`
/// items for test (at least one when the class can spare it), then take
/// `initial_per_class` items into the labeled set; the rest forms the pool.
/// All three sets are shuffled so that pool order carries no class signal.
pub fn make_splits(corpus: &Corpus, spec: &SplitSpec) -> Result<PoolState> {
    spec.validate()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); corpus.alphabet.len()];
    for (i, item) in corpus.items.iter().enumerate() {
        by_class[item.label].push(i);
    }
    let mut rng = seed::rng(seed::derive(spec.seed, seed::salt::SPLIT));
    let mut test = Vec::new();
    let mut labeled = Vec::new();
    let mut pool = Vec::new();
    for (letter, members) in corpus.alphabet.iter().zip(by_class.iter_mut()) {
        let n_test = spec.test_count(members.len());
        if members.len() < n_test + spec.initial_per_class {
            return Err(DataError::ClassTooSmall {
                letter: letter.clone(),
                available: members.len(),
                required: n_test + spec.initial_per_class,
            });
        }
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..n_test]);
        labeled.extend_from_slice(&members[n_test..n_test + spec.initial_per_class]);
        pool.extend_from_slice(&members[n_test + spec.initial_per_class..]);
    }
    test.shuffle(&mut rng);
    labeled.shuffle(&mut rng);
    pool.shuffle(&mut rng);

    let items = |idx: &[usize]| -> Vec<LabeledImage> {
        idx.iter().map(|&i| corpus.items[i].clone()).collect()
    };
    Ok(PoolState {
        labeled: items(&labeled),
        labeled_origin: labeled,
        pool_features: pool
            .iter()
            .map(|&i| corpus.items[i].pixels.clone())
            .collect(),
        hidden_labels: pool.iter().map(|&i| corpus.items[i].label).collect(),
        acquired: vec![false; pool.len()],
        pool_origin: pool,
        acquired_order: Vec::new(),
        test: items(&test),
        test_origin: test,
        round: 0,
    })
}
