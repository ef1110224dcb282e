use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use super::{Corpus, DataError, LabeledImage, Result};
use crate::seed;

const ENGLISH: &str = include_str!("../../tables/english.txt");

/// Target probability per letter.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    entries: Vec<(String, f64)>,
}

impl FrequencyTable {
    /// Probabilities must be non-negative and sum to 1 within 1e-9.
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (letter, p) in &entries {
            if !seen.insert(letter.as_str()) {
                return Err(DataError::Frequency(format!("duplicate letter {letter}")));
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(DataError::Frequency(format!(
                    "letter {letter} has probability {p}"
                )));
            }
        }
        let sum: f64 = entries.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::Frequency(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { entries })
    }

    /// Normalizes non-negative weights into probabilities.
    pub fn from_weights(entries: Vec<(String, f64)>) -> Result<Self> {
        if let Some((letter, w)) = entries.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(DataError::Frequency(format!(
                "letter {letter} has weight {w}"
            )));
        }
        let sum: f64 = entries.iter().map(|(_, w)| w).sum();
        if sum <= 0.0 {
            return Err(DataError::Frequency("weights sum to zero".into()));
        }
        Self::new(entries.into_iter().map(|(l, w)| (l, w / sum)).collect())
    }

    /// Parses `LETTER,weight` lines; blank lines and `#` comments are
    /// ignored. Weights are normalized, so percentages work as well.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (letter, weight) = line.split_once(',').ok_or_else(|| {
                DataError::Frequency(format!("line {}: expected LETTER,probability", i + 1))
            })?;
            let weight: f64 = weight.trim().parse().map_err(|_| {
                DataError::Frequency(format!(
                    "line {}: bad probability {:?}",
                    i + 1,
                    weight.trim()
                ))
            })?;
            entries.push((letter.trim().to_string(), weight));
        }
        Self::from_weights(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// English letter frequencies over all 26 letters.
    pub fn english() -> Self {
        Self::parse(ENGLISH).expect("bundled table is well-formed")
    }

    /// Restricts the table to `alphabet` (in alphabet order), renormalizing
    /// if letters were dropped. Every alphabet letter must be present.
    pub fn for_alphabet(&self, alphabet: &[String]) -> Result<Self> {
        let mut entries = Vec::with_capacity(alphabet.len());
        for letter in alphabet {
            let p = self.probability(letter).ok_or_else(|| {
                DataError::Frequency(format!("alphabet letter {letter} missing from table"))
            })?;
            entries.push((letter.clone(), p));
        }
        if entries.len() == self.entries.len() {
            Self::new(entries)
        } else {
            Self::from_weights(entries)
        }
    }

    pub fn probability(&self, letter: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(l, _)| l == letter)
            .map(|(_, p)| *p)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}

/// Hamilton (largest remainder) apportionment of `total` items.
///
/// Each letter gets `floor(p * total)`; the leftover items go one each to
/// the largest fractional remainders, ties broken alphabetically. Quotas
/// within 1e-9 of an integer are snapped to it so that exact shares such as
/// `0.8 * 100` do not lose an item to rounding, and remainders closer than
/// 1e-9 count as tied.
pub fn largest_remainder(probabilities: &[(String, f64)], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = probabilities
        .iter()
        .map(|(_, p)| {
            let q = p * total as f64;
            if (q - q.round()).abs() < 1e-9 {
                q.round()
            } else {
                q
            }
        })
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let leftover = total.saturating_sub(assigned);
    // Remainders are compared at 1e-9 resolution so that ties which are
    // exact in rational arithmetic stay ties.
    let remainder = |i: usize| ((quotas[i] - quotas[i].floor()) * 1e9).round() as i64;
    let mut order: Vec<usize> = (0..probabilities.len()).collect();
    order.sort_by(|&a, &b| {
        remainder(b)
            .cmp(&remainder(a))
            .then_with(|| probabilities[a].0.cmp(&probabilities[b].0))
    });
    for &i in order.iter().take(leftover) {
        counts[i] += 1;
    }
    counts
}

/// Resamples `corpus` so that its class histogram is the largest-remainder
/// apportionment of `target_size` under `table`.
///
/// Within a class, items are drawn without replacement when the class has
/// enough of them and with replacement otherwise. Output is grouped by
/// class in alphabet order.
pub fn resample_to_letter_frequency(
    corpus: &Corpus,
    table: &FrequencyTable,
    target_size: usize,
    seed: u64,
) -> Result<Corpus> {
    let table = table.for_alphabet(&corpus.alphabet)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); corpus.alphabet.len()];
    for (i, item) in corpus.items.iter().enumerate() {
        by_class[item.label].push(i);
    }
    for ((letter, p), members) in table.entries().iter().zip(&by_class) {
        if *p > 0.0 && members.is_empty() {
            return Err(DataError::MissingLetter {
                letter: letter.clone(),
                probability: *p,
            });
        }
    }

    let counts = largest_remainder(table.entries(), target_size);
    let mut rng = seed::rng(seed);
    let mut items: Vec<LabeledImage> = Vec::with_capacity(target_size);
    for (members, &need) in by_class.iter().zip(&counts) {
        if need <= members.len() {
            for pick in index::sample(&mut rng, members.len(), need) {
                items.push(corpus.items[members[pick]].clone());
            }
        } else {
            for _ in 0..need {
                let pick = rng.gen_range(0..members.len());
                items.push(corpus.items[members[pick]].clone());
            }
        }
    }
    Corpus::new(
        corpus.name.clone(),
        corpus.alphabet.clone(),
        corpus.resolution,
        items,
    )
}
