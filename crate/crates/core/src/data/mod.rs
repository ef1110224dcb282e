//! Corpus ingestion, letter-frequency resampling and the split protocol.

mod csv;
mod frequency;
mod image_dir;
mod split;
mod synthetic;

use std::collections::HashSet;
use std::path::PathBuf;

use thiserror::Error;

pub use self::csv::load_csv_corpus;
pub use frequency::{largest_remainder, resample_to_letter_frequency, FrequencyTable};
pub use image_dir::{area_resize, load_image_dir};
pub use split::{make_splits, PoolState, SplitSpec};
pub use synthetic::{synthetic_corpus, SyntheticSpec};

/// Letters that are motion signs in every corpus and never part of an alphabet.
pub const DYNAMIC_LETTERS: [&str; 2] = ["J", "Z"];

/// `A`..`Y` without `J`: the 24 static fingerspelling letters.
pub fn default_alphabet() -> Vec<String> {
    ('A'..='Z')
        .map(String::from)
        .filter(|l| !DYNAMIC_LETTERS.contains(&l.as_str()))
        .collect()
}

pub fn validate_alphabet(alphabet: &[String]) -> Result<()> {
    if alphabet.is_empty() {
        return Err(DataError::Alphabet("alphabet is empty".into()));
    }
    let mut seen = HashSet::new();
    for letter in alphabet {
        if letter.is_empty() || letter.contains(char::is_whitespace) || letter.contains(',') {
            return Err(DataError::Alphabet(format!(
                "invalid letter symbol {letter:?}"
            )));
        }
        if DYNAMIC_LETTERS.contains(&letter.as_str()) {
            return Err(DataError::Alphabet(format!(
                "{letter} is a dynamic sign and cannot be in the alphabet"
            )));
        }
        if !seen.insert(letter) {
            return Err(DataError::Alphabet(format!("duplicate letter {letter}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// Row-major grayscale intensities in `[0, 1]`.
    pub pixels: Vec<f64>,
    /// Index into the corpus alphabet.
    pub label: usize,
}

/// A labeled collection of square grayscale images.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub alphabet: Vec<String>,
    pub resolution: usize,
    pub items: Vec<LabeledImage>,
}

impl Corpus {
    /// Builds a corpus after checking every invariant.
    pub fn new(
        name: impl Into<String>,
        alphabet: Vec<String>,
        resolution: usize,
        items: Vec<LabeledImage>,
    ) -> Result<Self> {
        let corpus = Corpus {
            name: name.into(),
            alphabet,
            resolution,
            items,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        validate_alphabet(&self.alphabet)?;
        if self.resolution == 0 {
            return Err(DataError::Invalid("resolution must be >= 1".into()));
        }
        let len = self.resolution * self.resolution;
        for (i, item) in self.items.iter().enumerate() {
            if item.pixels.len() != len {
                return Err(DataError::Invalid(format!(
                    "item {i} has {} pixels, expected {len}",
                    item.pixels.len()
                )));
            }
            if item.label >= self.alphabet.len() {
                return Err(DataError::Invalid(format!(
                    "item {i} has label {} outside the {}-letter alphabet",
                    item.label,
                    self.alphabet.len()
                )));
            }
            if item.pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(DataError::Invalid(format!(
                    "item {i} has intensities outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Item count per alphabet letter.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.alphabet.len()];
        for item in &self.items {
            counts[item.label] += 1;
        }
        counts
    }

    pub fn letter_index(&self, letter: &str) -> Option<usize> {
        self.alphabet.iter().position(|l| l == letter)
    }

    /// Area-averaged copy at a different resolution.
    pub fn resized(&self, resolution: usize) -> Result<Corpus> {
        if resolution == self.resolution {
            return Ok(self.clone());
        }
        let items = self
            .items
            .iter()
            .map(|item| LabeledImage {
                pixels: area_resize(&item.pixels, self.resolution, self.resolution, resolution),
                label: item.label,
            })
            .collect();
        Corpus::new(self.name.clone(), self.alphabet.clone(), resolution, items)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {pixels} pixel columns is not a perfect square")]
    NonSquare { path: PathBuf, pixels: usize },
    #[error("{path}:{line}: label {label:?} is not in the alphabet")]
    LabelOutsideAlphabet {
        path: PathBuf,
        line: usize,
        label: String,
    },
    #[error("unknown letter directory {path} (not in the alphabet)")]
    UnknownLetter { path: PathBuf },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("invalid alphabet: {0}")]
    Alphabet(String),
    #[error("invalid frequency table: {0}")]
    Frequency(String),
    #[error("letter {letter} has target probability {probability} but no source items")]
    MissingLetter { letter: String, probability: f64 },
    #[error("class {letter} has {available} items but the split needs {required}")]
    ClassTooSmall {
        letter: String,
        available: usize,
        required: usize,
    },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_alphabet_has_24_static_letters() {
        let a = default_alphabet();
        assert_eq!(a.len(), 24);
        assert_eq!(a.first().map(String::as_str), Some("A"));
        assert_eq!(a.last().map(String::as_str), Some("Y"));
        assert!(!a.iter().any(|l| l == "J" || l == "Z"));
        validate_alphabet(&a).unwrap();
    }

    #[test]
    fn alphabet_rejects_j_and_duplicates() {
        let with_j: Vec<String> = ["A", "J"].iter().map(|s| s.to_string()).collect();
        assert!(validate_alphabet(&with_j).is_err());
        let dup: Vec<String> = ["A", "B", "A"].iter().map(|s| s.to_string()).collect();
        assert!(validate_alphabet(&dup).is_err());
    }

    #[test]
    fn corpus_rejects_bad_items() {
        let alphabet = vec!["A".to_string(), "B".to_string()];
        let bad_label = vec![LabeledImage {
            pixels: vec![0.0; 4],
            label: 2,
        }];
        assert!(Corpus::new("x", alphabet.clone(), 2, bad_label).is_err());
        let bad_len = vec![LabeledImage {
            pixels: vec![0.0; 3],
            label: 0,
        }];
        assert!(Corpus::new("x", alphabet, 2, bad_len).is_err());
    }
}
