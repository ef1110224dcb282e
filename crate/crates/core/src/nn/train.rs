use ndarray::{Array, Array2, Dimension, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{backward, forward};
use super::params::{LayerParams, ModelParams};
use super::{ForwardMode, NnError, Result};
use crate::seed;

/// Mini-batch Adam schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Seeds epoch shuffling and per-step dropout masks.
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    50
}
fn default_batch_size() -> usize {
    128
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::InvalidTrainConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "Adam betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be > 0", self.epsilon));
        }
        Ok(())
    }

    /// Optimizer steps `train` performs on `n` examples.
    pub fn steps_for(&self, n: usize) -> usize {
        self.epochs * n.div_ceil(self.batch_size)
    }

    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ModelParams,
    /// Mean (dropout-active) training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Optimizer steps taken.
    pub steps: usize,
}

struct Moments {
    m: Vec<LayerParams>,
    v: Vec<LayerParams>,
}

fn adam_update<D: Dimension>(
    param: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    m: &mut Array<f64, D>,
    v: &mut Array<f64, D>,
    cfg: &TrainConfig,
    step: i32,
) {
    let c1 = 1.0 - cfg.beta1.powi(step);
    let c2 = 1.0 - cfg.beta2.powi(step);
    Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        });
}

/// Trains a copy of `params` with Adam and softmax cross-entropy.
///
/// The example order is reshuffled every epoch from `cfg.seed`, and step `s`
/// draws its dropout masks from a seed derived from `(cfg.seed, s)`. Runs
/// exactly `epochs * ceil(n / batch_size)` steps.
pub fn train(
    params: &ModelParams,
    images: &[&[f64]],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    params.validate()?;
    if images.is_empty() {
        return Err(NnError::Empty("training set"));
    }
    if images.len() != labels.len() {
        return Err(NnError::LabelCount {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let classes = params.arch.class_count;
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(NnError::LabelOutOfRange {
            index,
            label,
            classes,
        });
    }
    let expected = params.arch.input_len();
    if let Some((index, img)) = images.iter().enumerate().find(|(_, i)| i.len() != expected) {
        return Err(NnError::ShapeMismatch {
            index,
            expected,
            actual: img.len(),
            resolution: params.arch.input_resolution,
            channels: params.arch.input_channels,
        });
    }

    let shapes = params.arch.layer_shapes();
    let mut moments = Moments {
        m: shapes.iter().map(LayerParams::zeros).collect(),
        v: shapes.iter().map(LayerParams::zeros).collect(),
    };
    let mut params = params.clone();
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut rng = seed::rng(seed::derive(cfg.seed, seed::salt::TRAIN));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut batch_images: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_labels: Vec<usize> = Vec::with_capacity(cfg.batch_size);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_images.clear();
            batch_labels.clear();
            batch_images.extend(chunk.iter().map(|&i| images[i]));
            batch_labels.extend(chunk.iter().map(|&i| labels[i]));
            let dropout_seed = seed::derive_all(cfg.seed, &[seed::salt::DROPOUT, step as u64]);
            let out = backward(
                &params,
                &batch_images,
                &batch_labels,
                ForwardMode::Stochastic(dropout_seed),
            );
            step += 1;
            total += out.loss * chunk.len() as f64;
            let t = i32::try_from(step).unwrap_or(i32::MAX);
            for ((layer, grad), (m, v)) in params
                .layers
                .iter_mut()
                .zip(&out.gradients.layers)
                .zip(moments.m.iter_mut().zip(moments.v.iter_mut()))
            {
                adam_update(
                    &mut layer.weight,
                    &grad.weight,
                    &mut m.weight,
                    &mut v.weight,
                    cfg,
                    t,
                );
                adam_update(
                    &mut layer.bias,
                    &grad.bias,
                    &mut m.bias,
                    &mut v.bias,
                    cfg,
                    t,
                );
            }
        }
        epoch_losses.push(total / images.len() as f64);
    }

    Ok(Trained {
        params,
        epoch_losses,
        steps: step,
    })
}

/// Test-set metrics under the deterministic forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Indexed by class; `None` for classes with no test items.
    pub per_class: Vec<Option<f64>>,
    pub predictions: Vec<usize>,
}

const EVAL_CHUNK: usize = 256;

/// Arg-max class per row; ties go to the lowest class index.
pub(crate) fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn evaluate(params: &ModelParams, images: &[&[f64]], labels: &[usize]) -> Result<Evaluation> {
    if images.is_empty() {
        return Err(NnError::Empty("test set"));
    }
    if images.len() != labels.len() {
        return Err(NnError::LabelCount {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let mut predictions = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        let probs = forward(params, chunk, ForwardMode::Deterministic)?;
        predictions.extend(argmax_rows(&probs));
    }
    let k = params.arch.class_count;
    let mut hits = vec![0usize; k];
    let mut totals = vec![0usize; k];
    let mut correct = 0;
    for (&pred, &label) in predictions.iter().zip(labels) {
        if label < k {
            totals[label] += 1;
            if pred == label {
                hits[label] += 1;
            }
        }
        if pred == label {
            correct += 1;
        }
    }
    let per_class = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / images.len() as f64,
        per_class,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, ArchSpec, ConvBlock, DenseBlock};

    fn arch(k: usize) -> ArchSpec {
        ArchSpec {
            input_resolution: 4,
            input_channels: 1,
            conv_blocks: vec![ConvBlock {
                filters: 2,
                kernel_size: 3,
                dropout: 0.0,
            }],
            fc_layers: vec![DenseBlock {
                width: 6,
                dropout: 0.0,
            }],
            class_count: k,
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
        c = TrainConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        c = TrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn step_count_follows_schedule() {
        let p = init_model(&arch(2), 0).unwrap();
        let imgs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0; 16]).collect();
        let refs: Vec<&[f64]> = imgs.iter().map(Vec::as_slice).collect();
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let out = train(&p, &refs, &labels, &cfg).unwrap();
        assert_eq!(out.steps, 9);
        assert_eq!(cfg.steps_for(10), 9);
        assert_eq!(out.epoch_losses.len(), 3);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let p = init_model(&arch(2), 0).unwrap();
        let err = train(&p, &[], &[], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, NnError::Empty(_)));
    }

    #[test]
    fn constant_predictor_accuracy_is_class_frequency() {
        let mut p = init_model(&arch(3), 0).unwrap();
        let head = p.layers.last_mut().unwrap();
        head.weight.fill(0.0);
        head.bias = ndarray::arr1(&[0.0, 0.0, 5.0]);
        let imgs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0; 16]).collect();
        let refs: Vec<&[f64]> = imgs.iter().map(Vec::as_slice).collect();
        let labels = [0, 1, 2, 2, 0, 2, 1, 1, 0, 0];
        let eval = evaluate(&p, &refs, &labels).unwrap();
        assert_eq!(eval.accuracy, 0.3);
        assert_eq!(eval.per_class, vec![Some(0.0), Some(0.0), Some(1.0)]);
    }

    #[test]
    fn absent_classes_are_undefined() {
        let p = init_model(&arch(4), 0).unwrap();
        let imgs = [vec![0.5; 16], vec![0.2; 16]];
        let refs: Vec<&[f64]> = imgs.iter().map(Vec::as_slice).collect();
        let eval = evaluate(&p, &refs, &[0, 0]).unwrap();
        assert!(eval.per_class[0].is_some());
        assert_eq!(eval.per_class[1..], [None, None, None]);
    }
}
