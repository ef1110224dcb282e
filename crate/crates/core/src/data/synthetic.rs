use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{validate_alphabet, Corpus, DataError, LabeledImage, Result};
use crate::seed;

/// Cluster-structured stand-in for a fingerspelling corpus.
///
/// Every class owns `modes` prototype images built from Gaussian blobs.
/// Prototypes of one class share a class-level blob layout and differ in a
/// mode-specific blob; mode `j` is drawn with weight `2^-j`, so some modes
/// are rare. Samples are a prototype shifted by up to `max_shift` pixels
/// plus Gaussian pixel noise, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub per_class: usize,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_max_shift")]
    pub max_shift: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_modes() -> usize {
    3
}

fn default_noise() -> f64 {
    0.1
}

fn default_max_shift() -> usize {
    2
}

fn default_resolution() -> usize {
    28
}

impl SyntheticSpec {
    pub fn new(per_class: usize, seed: u64) -> Self {
        Self {
            per_class,
            modes: default_modes(),
            noise: default_noise(),
            max_shift: default_max_shift(),
            resolution: default_resolution(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.per_class == 0 || self.modes == 0 {
            return Err(DataError::Invalid(
                "per_class and modes must be >= 1".into(),
            ));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(DataError::Invalid(format!(
                "noise {} must be >= 0",
                self.noise
            )));
        }
        if self.resolution < 4 || 2 * self.max_shift >= self.resolution {
            return Err(DataError::Invalid(format!(
                "resolution {} too small for shift {}",
                self.resolution, self.max_shift
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    x: f64,
    y: f64,
    sigma: f64,
    amplitude: f64,
}

impl Blob {
    fn random(rng: &mut ChaCha8Rng, res: f64) -> Self {
        Blob {
            x: rng.gen_range(0.2 * res..0.8 * res),
            y: rng.gen_range(0.2 * res..0.8 * res),
            sigma: rng.gen_range(0.06 * res..0.14 * res),
            amplitude: rng.gen_range(0.5..1.0),
        }
    }
}

fn render(blobs: &[Blob], res: usize) -> Vec<f64> {
    let mut img = vec![0.0; res * res];
    for (i, px) in img.iter_mut().enumerate() {
        let (x, y) = ((i % res) as f64, (i / res) as f64);
        let v: f64 = blobs
            .iter()
            .map(|b| {
                let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
                b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
            })
            .sum();
        *px = v.min(1.0);
    }
    img
}

/// Generates `spec.per_class` items per alphabet letter, grouped by class.
pub fn synthetic_corpus(name: &str, alphabet: &[String], spec: &SyntheticSpec) -> Result<Corpus> {
    validate_alphabet(alphabet)?;
    spec.validate()?;
    let res = spec.resolution;
    let mut proto_rng = seed::rng(seed::derive(spec.seed, 1));
    let prototypes: Vec<Vec<Vec<f64>>> = alphabet
        .iter()
        .map(|_| {
            let shared = [
                Blob::random(&mut proto_rng, res as f64),
                Blob::random(&mut proto_rng, res as f64),
            ];
            (0..spec.modes)
                .map(|_| {
                    let own = Blob::random(&mut proto_rng, res as f64);
                    render(&[shared[0], shared[1], own], res)
                })
                .collect()
        })
        .collect();

    let weights: Vec<f64> = (0..spec.modes).map(|j| 0.5f64.powi(j as i32)).collect();
    let total: f64 = weights.iter().sum();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| DataError::Invalid(e.to_string()))?;
    let mut rng = seed::rng(seed::derive(spec.seed, 2));
    let shift = spec.max_shift as i64;
    let mut items = Vec::with_capacity(alphabet.len() * spec.per_class);
    for (label, modes) in prototypes.iter().enumerate() {
        for _ in 0..spec.per_class {
            let mut u = rng.gen::<f64>() * total;
            let mode = weights
                .iter()
                .position(|w| {
                    u -= w;
                    u < 0.0
                })
                .unwrap_or(spec.modes - 1);
            let dx = rng.gen_range(-shift..=shift);
            let dy = rng.gen_range(-shift..=shift);
            let proto = &modes[mode];
            let mut pixels = vec![0.0; res * res];
            for y in 0..res as i64 {
                for x in 0..res as i64 {
                    let (sx, sy) = (x - dx, y - dy);
                    let base = if (0..res as i64).contains(&sx) && (0..res as i64).contains(&sy) {
                        proto[(sy * res as i64 + sx) as usize]
                    } else {
                        0.0
                    };
                    pixels[(y * res as i64 + x) as usize] =
                        (base + noise.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            items.push(LabeledImage { pixels, label });
        }
    }
    Corpus::new(name, alphabet.to_vec(), res, items)
}
