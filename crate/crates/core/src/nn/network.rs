use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::arch::LayerShape;
use super::params::{LayerParams, ModelParams};
use super::{ForwardMode, NnError, Result};
use crate::seed;

/// Per-layer gradients, shaped like [`ModelParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub(crate) fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .arch
                .layer_shapes()
                .iter()
                .map(LayerParams::zeros)
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossAndGradients {
    /// Mean negative log-probability of the true class.
    pub loss: f64,
    pub gradients: Gradients,
}

/// Dropout masks for one batch item, one entry per layer. Kept units hold
/// `1 / (1 - p)`, dropped units `0`.
type ItemMasks = Vec<Option<Vec<f64>>>;

fn draw_masks(shapes: &[LayerShape], mode: ForwardMode, item: usize) -> ItemMasks {
    let ForwardMode::Stochastic(pass_seed) = mode else {
        return vec![None; shapes.len()];
    };
    let mut rng = seed::rng(seed::derive_all(
        pass_seed,
        &[seed::salt::DROPOUT, item as u64],
    ));
    shapes
        .iter()
        .map(|shape| {
            let p = shape.dropout();
            (p > 0.0).then(|| {
                let keep = 1.0 / (1.0 - p);
                (0..shape.output_len())
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect()
            })
        })
        .collect()
}

struct ConvCache {
    cols: Array2<f64>,
    pre: Array2<f64>,
    /// For each pooled unit, the flat index into `pre` of the window maximum.
    argmax: Vec<usize>,
}

/// Same-padded im2col: rows are (channel, ky, kx), columns are output pixels.
fn im2col(x: &[f64], channels: usize, size: usize, kernel: usize) -> Array2<f64> {
    let pad = (kernel / 2) as isize;
    let mut cols = Array2::zeros((channels * kernel * kernel, size * size));
    let s = size as isize;
    for c in 0..channels {
        let plane = &x[c * size * size..(c + 1) * size * size];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                let mut dst = cols.row_mut(row);
                let dst = dst.as_slice_mut().expect("standard layout");
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for i in 0..s {
                    let sy = i + dy;
                    if sy < 0 || sy >= s {
                        continue;
                    }
                    for j in 0..s {
                        let sx = j + dx;
                        if sx >= 0 && sx < s {
                            dst[(i * s + j) as usize] = plane[(sy * s + sx) as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &Array2<f64>, channels: usize, size: usize, kernel: usize) -> Vec<f64> {
    let pad = (kernel / 2) as isize;
    let s = size as isize;
    let mut x = vec![0.0; channels * size * size];
    for c in 0..channels {
        let plane = &mut x[c * size * size..(c + 1) * size * size];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                let src = cols.row(row);
                let src = src.as_slice().expect("standard layout");
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for i in 0..s {
                    let sy = i + dy;
                    if sy < 0 || sy >= s {
                        continue;
                    }
                    for j in 0..s {
                        let sx = j + dx;
                        if sx >= 0 && sx < s {
                            plane[(sy * s + sx) as usize] += src[(i * s + j) as usize];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Conv + ReLU + 2x2 max-pool + dropout for one image.
fn conv_forward(
    layer: &LayerParams,
    shape: &LayerShape,
    x: &[f64],
    mask: Option<&[f64]>,
) -> (Vec<f64>, ConvCache) {
    let LayerShape::Conv {
        in_channels,
        out_channels,
        kernel,
        size,
        ..
    } = *shape
    else {
        unreachable!("conv_forward called on a dense layer")
    };
    let cols = im2col(x, in_channels, size, kernel);
    let mut pre = layer.weight.dot(&cols);
    for (mut row, &b) in pre.axis_iter_mut(Axis(0)).zip(layer.bias.iter()) {
        row.mapv_inplace(|v| v + b);
    }
    let half = size / 2;
    let mut out = Vec::with_capacity(out_channels * half * half);
    let mut argmax = Vec::with_capacity(out_channels * half * half);
    let pre_flat = pre.as_slice().expect("standard layout");
    for f in 0..out_channels {
        let base = f * size * size;
        for i in 0..half {
            for j in 0..half {
                let mut best_idx = base + (2 * i) * size + 2 * j;
                let mut best = pre_flat[best_idx].max(0.0);
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * size + 2 * j + dj;
                    let v = pre_flat[idx].max(0.0);
                    if v > best {
                        best = v;
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    if let Some(mask) = mask {
        out.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }
    (out, ConvCache { cols, pre, argmax })
}

/// Accumulates parameter gradients for one image and returns the gradient
/// with respect to the layer input when `need_input_grad` is set.
fn conv_backward(
    layer: &LayerParams,
    shape: &LayerShape,
    cache: &ConvCache,
    mask: Option<&[f64]>,
    d_out: &[f64],
    grad: &mut LayerParams,
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    let LayerShape::Conv {
        in_channels,
        out_channels,
        kernel,
        size,
        ..
    } = *shape
    else {
        unreachable!("conv_backward called on a dense layer")
    };
    let mut d_pre = Array2::<f64>::zeros((out_channels, size * size));
    {
        let pre = cache.pre.as_slice().expect("standard layout");
        let d = d_pre.as_slice_mut().expect("standard layout");
        for (o, &src) in cache.argmax.iter().enumerate() {
            let g = match mask {
                Some(m) => d_out[o] * m[o],
                None => d_out[o],
            };
            if pre[src] > 0.0 {
                d[src] += g;
            }
        }
    }
    general_mat_mul(1.0, &d_pre, &cache.cols.t(), 1.0, &mut grad.weight);
    grad.bias += &d_pre.sum_axis(Axis(1));
    need_input_grad.then(|| {
        let d_cols = layer.weight.t().dot(&d_pre);
        col2im(&d_cols, in_channels, size, kernel)
    })
}

struct DenseCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Everything a backward pass needs from the forward pass.
struct Trace {
    conv: Vec<Vec<ConvCache>>,
    dense: Vec<DenseCache>,
    masks: Vec<ItemMasks>,
    logits: Array2<f64>,
}

fn check_batch(params: &ModelParams, images: &[&[f64]]) -> Result<()> {
    let expected = params.arch.input_len();
    for (index, img) in images.iter().enumerate() {
        if img.len() != expected {
            return Err(NnError::ShapeMismatch {
                index,
                expected,
                actual: img.len(),
                resolution: params.arch.input_resolution,
                channels: params.arch.input_channels,
            });
        }
    }
    Ok(())
}

fn run_forward(params: &ModelParams, images: &[&[f64]], mode: ForwardMode, keep: bool) -> Trace {
    let shapes = params.arch.layer_shapes();
    let n_conv = params.arch.conv_blocks.len();
    let masks: Vec<ItemMasks> = (0..images.len())
        .map(|i| draw_masks(&shapes, mode, i))
        .collect();

    let feature_len = match shapes[n_conv] {
        LayerShape::Dense { inputs, .. } => inputs,
        LayerShape::Conv { .. } => unreachable!("head is dense"),
    };
    let mut features = Array2::<f64>::zeros((images.len(), feature_len));
    let mut conv_caches = Vec::with_capacity(if keep { images.len() } else { 0 });
    for (i, img) in images.iter().enumerate() {
        let mut x = img.to_vec();
        let mut caches = Vec::with_capacity(n_conv);
        for (l, shape) in shapes[..n_conv].iter().enumerate() {
            let (out, cache) = conv_forward(&params.layers[l], shape, &x, masks[i][l].as_deref());
            x = out;
            if keep {
                caches.push(cache);
            }
        }
        features
            .row_mut(i)
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(&x);
        if keep {
            conv_caches.push(caches);
        }
    }

    let mut dense = Vec::new();
    let mut x = features;
    for (l, shape) in shapes.iter().enumerate().skip(n_conv) {
        let layer = &params.layers[l];
        let mut pre = x.dot(&layer.weight.t());
        pre += &layer.bias;
        let LayerShape::Dense { relu, dropout, .. } = *shape else {
            unreachable!("dense stage")
        };
        if !relu {
            if keep {
                dense.push(DenseCache {
                    input: x,
                    pre: pre.clone(),
                    mask: None,
                });
            }
            x = pre;
            break;
        }
        let mask = (dropout > 0.0 && matches!(mode, ForwardMode::Stochastic(_))).then(|| {
            let mut m = Array2::zeros(pre.dim());
            for (i, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
                let item = masks[i][l].as_ref().expect("mask drawn for dropout layer");
                row.as_slice_mut()
                    .expect("standard layout")
                    .copy_from_slice(item);
            }
            m
        });
        let mut out = pre.mapv(|v| v.max(0.0));
        if let Some(m) = &mask {
            out *= m;
        }
        if keep {
            dense.push(DenseCache {
                input: x,
                pre,
                mask,
            });
        }
        x = out;
    }

    Trace {
        conv: conv_caches,
        dense,
        masks,
        logits: x,
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

/// Pre-softmax outputs, `batch x K`.
pub fn forward_logits(
    params: &ModelParams,
    images: &[&[f64]],
    mode: ForwardMode,
) -> Result<Array2<f64>> {
    params.validate()?;
    check_batch(params, images)?;
    Ok(run_forward(params, images, mode, false).logits)
}

/// Class probabilities, `batch x K`; each row sums to one.
pub fn forward(params: &ModelParams, images: &[&[f64]], mode: ForwardMode) -> Result<Array2<f64>> {
    Ok(softmax_rows(&forward_logits(params, images, mode)?))
}

/// Mean softmax cross-entropy over the batch and its exact gradient. Dropout
/// masks come from `dropout_seed`, so the function is deterministic.
pub fn loss_and_gradients(
    params: &ModelParams,
    images: &[&[f64]],
    labels: &[usize],
    dropout_seed: u64,
) -> Result<LossAndGradients> {
    params.validate()?;
    check_batch(params, images)?;
    if images.len() != labels.len() {
        return Err(NnError::LabelCount {
            images: images.len(),
            labels: labels.len(),
        });
    }
    if images.is_empty() {
        return Err(NnError::Empty("batch"));
    }
    let classes = params.arch.class_count;
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(NnError::LabelOutOfRange {
            index,
            label,
            classes,
        });
    }
    Ok(backward(
        params,
        images,
        labels,
        ForwardMode::Stochastic(dropout_seed),
    ))
}

pub(crate) fn backward(
    params: &ModelParams,
    images: &[&[f64]],
    labels: &[usize],
    mode: ForwardMode,
) -> LossAndGradients {
    let shapes = params.arch.layer_shapes();
    let n_conv = params.arch.conv_blocks.len();
    let trace = run_forward(params, images, mode, true);
    let batch = images.len() as f64;

    let mut loss = 0.0;
    let mut d = Array2::<f64>::zeros(trace.logits.dim());
    for (i, (row, &y)) in trace.logits.axis_iter(Axis(0)).zip(labels).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss -= row[y] - log_norm;
        for (k, &v) in row.iter().enumerate() {
            d[[i, k]] = (v - log_norm).exp() / batch;
        }
        d[[i, y]] -= 1.0 / batch;
    }
    loss /= batch;

    let mut grads = Gradients::zeros_like(params);
    for (pos, cache) in trace.dense.iter().enumerate().rev() {
        let l = n_conv + pos;
        let LayerShape::Dense { relu, .. } = shapes[l] else {
            unreachable!("dense stage")
        };
        if relu {
            if let Some(m) = &cache.mask {
                d *= m;
            }
            ndarray::Zip::from(&mut d)
                .and(&cache.pre)
                .for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
        }
        let g = &mut grads.layers[l];
        general_mat_mul(1.0, &d.t(), &cache.input, 1.0, &mut g.weight);
        g.bias += &d.sum_axis(Axis(0));
        d = d.dot(&params.layers[l].weight);
    }

    if n_conv > 0 {
        for (i, caches) in trace.conv.iter().enumerate() {
            let mut g_out: Vec<f64> = d.row(i).to_vec();
            for l in (0..n_conv).rev() {
                let next = conv_backward(
                    &params.layers[l],
                    &shapes[l],
                    &caches[l],
                    trace.masks[i][l].as_deref(),
                    &g_out,
                    &mut grads.layers[l],
                    l > 0,
                );
                match next {
                    Some(v) => g_out = v,
                    None => break,
                }
            }
        }
    }

    LossAndGradients {
        loss,
        gradients: grads,
    }
}

/// Distance of the forward pass from the network's non-differentiable
/// points: the smallest |pre-activation| over all ReLU units and the
/// smallest gap between the two largest entries of any max-pool window whose
/// maximum is positive. Finite-difference checks are only meaningful when a
/// perturbation cannot cross one of these.
pub fn nonsmooth_margin(params: &ModelParams, images: &[&[f64]], dropout_seed: u64) -> Result<f64> {
    params.validate()?;
    check_batch(params, images)?;
    let trace = run_forward(params, images, ForwardMode::Stochastic(dropout_seed), true);
    let shapes = params.arch.layer_shapes();
    let mut margin = f64::INFINITY;
    for caches in &trace.conv {
        for (cache, shape) in caches.iter().zip(&shapes) {
            let LayerShape::Conv { size, .. } = *shape else {
                unreachable!()
            };
            margin = margin.min(min_abs(cache.pre.view()));
            let pre = cache.pre.as_slice().expect("standard layout");
            let half = size / 2;
            for f in 0..cache.pre.nrows() {
                let base = f * size * size;
                for i in 0..half {
                    for j in 0..half {
                        let mut w: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                            .iter()
                            .map(|(di, dj)| pre[base + (2 * i + di) * size + 2 * j + dj].max(0.0))
                            .collect();
                        w.sort_by(|a, b| b.total_cmp(a));
                        if w[0] > 0.0 {
                            margin = margin.min(w[0] - w[1]);
                        }
                    }
                }
            }
        }
    }
    for cache in &trace.dense[..trace.dense.len() - 1] {
        margin = margin.min(min_abs(cache.pre.view()));
    }
    Ok(margin)
}

fn min_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}
