use std::fmt;

use serde::{Deserialize, Serialize};

use super::{NnError, Result};

/// Convolution, ReLU, 2x2 max-pool, dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel_size: usize,
    pub dropout: f64,
}

/// Hidden fully-connected layer with ReLU and dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseBlock {
    pub width: usize,
    pub dropout: f64,
}

/// Classifier architecture. The classification head (hidden -> `class_count`)
/// is implicit and always last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    #[serde(default = "default_resolution")]
    pub input_resolution: usize,
    #[serde(default = "default_channels")]
    pub input_channels: usize,
    #[serde(default = "default_conv_blocks")]
    pub conv_blocks: Vec<ConvBlock>,
    #[serde(default = "default_fc_layers")]
    pub fc_layers: Vec<DenseBlock>,
    #[serde(default = "default_class_count")]
    pub class_count: usize,
}

fn default_resolution() -> usize {
    28
}

fn default_channels() -> usize {
    1
}

fn default_conv_blocks() -> Vec<ConvBlock> {
    vec![
        ConvBlock {
            filters: 32,
            kernel_size: 3,
            dropout: 0.25,
        },
        ConvBlock {
            filters: 64,
            kernel_size: 3,
            dropout: 0.25,
        },
    ]
}

fn default_fc_layers() -> Vec<DenseBlock> {
    vec![DenseBlock {
        width: 128,
        dropout: 0.5,
    }]
}

fn default_class_count() -> usize {
    24
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            input_resolution: default_resolution(),
            input_channels: default_channels(),
            conv_blocks: default_conv_blocks(),
            fc_layers: default_fc_layers(),
            class_count: default_class_count(),
        }
    }
}

/// Concrete shape of one parameterized layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum LayerShape {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        /// Spatial side length of the layer input (= conv output, same padding).
        size: usize,
        dropout: f64,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        dropout: f64,
        /// `false` only for the classification head.
        relu: bool,
    },
}

impl LayerShape {
    pub(crate) fn weight_dims(&self) -> (usize, usize) {
        match *self {
            LayerShape::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (out_channels, in_channels * kernel * kernel),
            LayerShape::Dense {
                inputs, outputs, ..
            } => (outputs, inputs),
        }
    }

    pub(crate) fn bias_len(&self) -> usize {
        self.weight_dims().0
    }

    pub(crate) fn fan_in(&self) -> usize {
        self.weight_dims().1
    }

    /// Number of units the layer's dropout mask covers (after pooling for conv).
    pub(crate) fn output_len(&self) -> usize {
        match *self {
            LayerShape::Conv {
                out_channels, size, ..
            } => out_channels * (size / 2) * (size / 2),
            LayerShape::Dense { outputs, .. } => outputs,
        }
    }

    pub(crate) fn dropout(&self) -> f64 {
        match *self {
            LayerShape::Conv { dropout, .. } | LayerShape::Dense { dropout, .. } => dropout,
        }
    }
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NnError::InvalidArch(format!("{msg} in [{self}]")));
        if self.input_resolution == 0 {
            return bad("input_resolution must be >= 1".into());
        }
        if self.input_channels == 0 {
            return bad("input_channels must be >= 1".into());
        }
        if self.class_count < 2 {
            return bad(format!("class_count {} < 2", self.class_count));
        }
        let mut size = self.input_resolution;
        for (i, block) in self.conv_blocks.iter().enumerate() {
            if block.filters == 0 {
                return bad(format!("conv block {i} has 0 filters"));
            }
            if block.kernel_size == 0 || block.kernel_size % 2 == 0 {
                return bad(format!(
                    "conv block {i} kernel_size {} must be odd and >= 1",
                    block.kernel_size
                ));
            }
            if !(0.0..1.0).contains(&block.dropout) {
                return bad(format!(
                    "conv block {i} dropout {} outside [0, 1)",
                    block.dropout
                ));
            }
            if size < 2 {
                return bad(format!(
                    "conv block {i} receives a {size}x{size} map, too small for 2x2 pooling"
                ));
            }
            size /= 2;
        }
        for (i, layer) in self.fc_layers.iter().enumerate() {
            if layer.width == 0 {
                return bad(format!("fc layer {i} has width 0"));
            }
            if !(0.0..1.0).contains(&layer.dropout) {
                return bad(format!(
                    "fc layer {i} dropout {} outside [0, 1)",
                    layer.dropout
                ));
            }
        }
        Ok(())
    }

    /// Values per input image.
    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_resolution * self.input_resolution
    }

    /// Shapes of all parameterized layers in declaration order; the head is last.
    pub(crate) fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::with_capacity(self.conv_blocks.len() + self.fc_layers.len() + 1);
        let mut channels = self.input_channels;
        let mut size = self.input_resolution;
        for block in &self.conv_blocks {
            shapes.push(LayerShape::Conv {
                in_channels: channels,
                out_channels: block.filters,
                kernel: block.kernel_size,
                size,
                dropout: block.dropout,
            });
            channels = block.filters;
            size /= 2;
        }
        let mut width = channels * size * size;
        for layer in &self.fc_layers {
            shapes.push(LayerShape::Dense {
                inputs: width,
                outputs: layer.width,
                dropout: layer.dropout,
                relu: true,
            });
            width = layer.width;
        }
        shapes.push(LayerShape::Dense {
            inputs: width,
            outputs: self.class_count,
            dropout: 0.0,
            relu: false,
        });
        shapes
    }

    /// Same architecture with a different head width.
    pub fn with_class_count(&self, class_count: usize) -> ArchSpec {
        ArchSpec {
            class_count,
            ..self.clone()
        }
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} conv[",
            self.input_channels, self.input_resolution, self.input_resolution
        )?;
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(
                f,
                "{}@{}x{} p={}",
                b.filters, b.kernel_size, b.kernel_size, b.dropout
            )?;
        }
        f.write_str("] fc[")?;
        for (i, l) in self.fc_layers.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} p={}", l.width, l.dropout)?;
        }
        write!(f, "] K={}", self.class_count)
    }
}
