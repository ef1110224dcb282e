use ndarray::{Array1, Array2};
use rand::Rng;

use super::arch::{ArchSpec, LayerShape};
use super::{NnError, Result};
use crate::seed;

/// Weight matrix and bias vector of one layer.
///
/// Conv weights are `(filters, in_channels * k * k)` with the input window
/// flattened channel-major then row-major; dense weights are `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerParams {
    pub(crate) fn zeros(shape: &LayerShape) -> Self {
        Self {
            weight: Array2::zeros(shape.weight_dims()),
            bias: Array1::zeros(shape.bias_len()),
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All classifier parameters plus the architecture that fixes their shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchSpec,
    /// One entry per parameterized layer; the classification head is last.
    pub layers: Vec<LayerParams>,
    pub init_seed: u64,
}

impl ModelParams {
    /// Checks that every array matches the shape implied by `arch` and that
    /// all values are finite.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let shapes = self.arch.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(NnError::Layout(format!(
                "{} layers for an architecture with {}",
                self.layers.len(),
                shapes.len()
            )));
        }
        for (i, (shape, layer)) in shapes.iter().zip(&self.layers).enumerate() {
            if layer.weight.dim() != shape.weight_dims() || layer.bias.len() != shape.bias_len() {
                return Err(NnError::Layout(format!(
                    "layer {i}: weight {:?} bias {}, expected {:?} and {}",
                    layer.weight.dim(),
                    layer.bias.len(),
                    shape.weight_dims(),
                    shape.bias_len()
                )));
            }
            if layer
                .weight
                .iter()
                .chain(layer.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(NnError::Layout(format!(
                    "layer {i} holds a non-finite value"
                )));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn head(&self) -> &LayerParams {
        self.layers.last().expect("architecture always has a head")
    }

    /// Layers other than the classification head.
    pub fn backbone(&self) -> &[LayerParams] {
        &self.layers[..self.layers.len() - 1]
    }
}

/// He-style uniform draw, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero bias.
/// Layer `i` draws from its own stream so that any layer can be re-drawn
/// without touching the others.
fn draw_layer(shape: &LayerShape, seed: u64, index: usize) -> LayerParams {
    let mut rng = seed::rng(seed::derive_all(seed, &[seed::salt::LAYER, index as u64]));
    let limit = (6.0 / shape.fan_in() as f64).sqrt();
    let mut layer = LayerParams::zeros(shape);
    layer
        .weight
        .iter_mut()
        .for_each(|w| *w = rng.gen_range(-limit..limit));
    layer
}

pub fn init_model(arch: &ArchSpec, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let layers = arch
        .layer_shapes()
        .iter()
        .enumerate()
        .map(|(i, shape)| draw_layer(shape, seed, i))
        .collect();
    Ok(ModelParams {
        arch: arch.clone(),
        layers,
        init_seed: seed,
    })
}

/// Copies every layer except the head, which is re-drawn exactly as
/// [`init_model`] would draw it for `seed`.
pub fn reinit_head(params: &ModelParams, seed: u64) -> Result<ModelParams> {
    reinit_head_for(params, params.arch.class_count, seed)
}

/// Like [`reinit_head`], but the new head has `class_count` outputs. Used when
/// the pre-training corpus has a different alphabet than the target.
pub fn reinit_head_for(params: &ModelParams, class_count: usize, seed: u64) -> Result<ModelParams> {
    params.validate()?;
    let arch = params.arch.with_class_count(class_count);
    arch.validate()?;
    let shapes = arch.layer_shapes();
    let head_index = shapes.len() - 1;
    let mut layers = params.backbone().to_vec();
    layers.push(draw_layer(&shapes[head_index], seed, head_index));
    Ok(ModelParams {
        arch,
        layers,
        init_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ConvBlock, DenseBlock};

    fn small() -> ArchSpec {
        ArchSpec {
            input_resolution: 8,
            input_channels: 1,
            conv_blocks: vec![ConvBlock {
                filters: 3,
                kernel_size: 3,
                dropout: 0.25,
            }],
            fc_layers: vec![DenseBlock {
                width: 5,
                dropout: 0.5,
            }],
            class_count: 4,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model(&small(), 11).unwrap();
        let b = init_model(&small(), 11).unwrap();
        assert_eq!(a, b);
        let c = init_model(&small(), 12).unwrap();
        assert_ne!(a.layers[0].weight, c.layers[0].weight);
    }

    #[test]
    fn biases_start_at_zero_and_weights_within_limit() {
        let p = init_model(&ArchSpec::default(), 3).unwrap();
        p.validate().unwrap();
        for (layer, shape) in p.layers.iter().zip(p.arch.layer_shapes()) {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
            let limit = (6.0 / shape.fan_in() as f64).sqrt();
            assert!(layer.weight.iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn invalid_arch_is_rejected() {
        let mut arch = small();
        arch.conv_blocks[0].kernel_size = 2;
        assert!(matches!(init_model(&arch, 0), Err(NnError::InvalidArch(_))));
    }

    #[test]
    fn head_reinit_copies_backbone() {
        let p = init_model(&small(), 1).unwrap();
        let q = reinit_head(&p, 99).unwrap();
        assert_eq!(p.backbone(), q.backbone());
        assert_ne!(p.head().weight, q.head().weight);
        // The new head is exactly the head init_model draws for that seed.
        assert_eq!(q.head(), init_model(&small(), 99).unwrap().head());
    }

    #[test]
    fn head_reinit_can_change_class_count() {
        let p = init_model(&small(), 1).unwrap();
        let q = reinit_head_for(&p, 7, 2).unwrap();
        assert_eq!(q.arch.class_count, 7);
        assert_eq!(q.head().weight.dim(), (7, 5));
        q.validate().unwrap();
    }
}
