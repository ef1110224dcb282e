//! Versioned little-endian weight file.
//!
//! Layout: magic `ALFW`, `u32` format version, the serialized [`ArchSpec`],
//! `u64` init seed, then every layer's weight matrix followed by its bias
//! vector in declaration order, each value an `f64`.
//!
//! The arch block is `u32` resolution, `u32` channels, `u32` conv block
//! count, per block (`u32` filters, `u32` kernel, `f64` dropout), `u32` fc
//! layer count, per layer (`u32` width, `f64` dropout), `u32` class count.

use std::fs;
use std::path::Path;

use super::arch::{ArchSpec, ConvBlock, DenseBlock};
use super::params::{LayerParams, ModelParams};
use super::{NnError, Result};

pub const WEIGHT_FILE_MAGIC: [u8; 4] = *b"ALFW";
pub const WEIGHT_FILE_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| NnError::InvalidArch(format!("dimension {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn params_to_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    params.validate()?;
    let arch = &params.arch;
    let mut out = Vec::with_capacity(64 + 8 * params.parameter_count());
    out.extend_from_slice(&WEIGHT_FILE_MAGIC);
    out.extend_from_slice(&WEIGHT_FILE_VERSION.to_le_bytes());
    put_u32(&mut out, arch.input_resolution)?;
    put_u32(&mut out, arch.input_channels)?;
    put_u32(&mut out, arch.conv_blocks.len())?;
    for b in &arch.conv_blocks {
        put_u32(&mut out, b.filters)?;
        put_u32(&mut out, b.kernel_size)?;
        put_f64(&mut out, b.dropout);
    }
    put_u32(&mut out, arch.fc_layers.len())?;
    for l in &arch.fc_layers {
        put_u32(&mut out, l.width)?;
        put_f64(&mut out, l.dropout);
    }
    put_u32(&mut out, arch.class_count)?;
    out.extend_from_slice(&params.init_seed.to_le_bytes());
    for layer in &params.layers {
        layer.weight.iter().for_each(|&v| put_f64(&mut out, v));
        layer.bias.iter().for_each(|&v| put_f64(&mut out, v));
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| {
            NnError::CorruptFile(format!(
                "truncated while reading {what} at byte {} of {}",
                self.pos,
                self.buf.len()
            ))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Upper bound on layer counts in a header; anything larger is corruption.
const MAX_LAYERS: usize = 1024;

pub fn params_from_bytes(buf: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != WEIGHT_FILE_MAGIC {
        return Err(NnError::CorruptFile(format!(
            "bad magic bytes {magic:02x?}, expected {WEIGHT_FILE_MAGIC:02x?}"
        )));
    }
    let version = r.u32("version")?;
    if version != WEIGHT_FILE_VERSION {
        return Err(NnError::UnsupportedVersion {
            found: version,
            supported: WEIGHT_FILE_VERSION,
        });
    }
    let input_resolution = r.usize("input resolution")?;
    let input_channels = r.usize("input channels")?;
    let n_conv = r.usize("conv block count")?;
    if n_conv > MAX_LAYERS {
        return Err(NnError::CorruptFile(format!("{n_conv} conv blocks")));
    }
    let mut conv_blocks = Vec::with_capacity(n_conv);
    for _ in 0..n_conv {
        conv_blocks.push(ConvBlock {
            filters: r.usize("conv filters")?,
            kernel_size: r.usize("conv kernel")?,
            dropout: r.f64("conv dropout")?,
        });
    }
    let n_fc = r.usize("fc layer count")?;
    if n_fc > MAX_LAYERS {
        return Err(NnError::CorruptFile(format!("{n_fc} fc layers")));
    }
    let mut fc_layers = Vec::with_capacity(n_fc);
    for _ in 0..n_fc {
        fc_layers.push(DenseBlock {
            width: r.usize("fc width")?,
            dropout: r.f64("fc dropout")?,
        });
    }
    let class_count = r.usize("class count")?;
    let arch = ArchSpec {
        input_resolution,
        input_channels,
        conv_blocks,
        fc_layers,
        class_count,
    };
    arch.validate()
        .map_err(|e| NnError::CorruptFile(format!("embedded architecture: {e}")))?;
    let init_seed = r.u64("init seed")?;

    let shapes = arch.layer_shapes();
    let needed: usize = shapes
        .iter()
        .map(|s| (s.weight_dims().0 * s.weight_dims().1 + s.bias_len()) * 8)
        .sum();
    if buf.len() - r.pos != needed {
        return Err(NnError::CorruptFile(format!(
            "parameter block is {} bytes, architecture needs {needed}",
            buf.len() - r.pos
        )));
    }
    let mut layers = Vec::with_capacity(shapes.len());
    for shape in &shapes {
        let mut layer = LayerParams::zeros(shape);
        for v in layer.weight.iter_mut() {
            *v = r.f64("weights")?;
        }
        for v in layer.bias.iter_mut() {
            *v = r.f64("bias")?;
        }
        layers.push(layer);
    }
    let params = ModelParams {
        arch,
        layers,
        init_seed,
    };
    params
        .validate()
        .map_err(|e| NnError::CorruptFile(e.to_string()))?;
    Ok(params)
}

pub fn save_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, params_to_bytes(params)?)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    params_from_bytes(&fs::read(path)?)
}

/// Loads a weight file and checks that it was saved for `expected`.
pub fn load_params_expecting(path: impl AsRef<Path>, expected: &ArchSpec) -> Result<ModelParams> {
    let params = load_params(path)?;
    if &params.arch != expected {
        return Err(NnError::ArchMismatch {
            expected: Box::new(expected.clone()),
            found: Box::new(params.arch),
        });
    }
    Ok(params)
}
