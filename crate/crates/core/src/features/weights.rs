//! Convolution weights: seeded initialization and the `DMTW` file format.
//!
//! File layout (little-endian):
//!
//! ```text
//! "DMTW"  u32 version (=1)  u32 line count
//! line count x { u32 byte length, UTF-8 spec line }
//! per conv layer: u32 out, u32 in, u32 kh, u32 kw,
//!                 f32 kernel[out][in][kh][kw], f32 bias[out]
//! ```
//!
//! The spec lines are the [`ExtractorSpec`] text form, so non-conv layers
//! cost nothing beyond their line.

use std::io::{Read, Write};

use rand::Rng;

use super::spec::ExtractorSpec;
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DMTW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// `[out][in][kh][kw]` row-major.
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvWeights {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel_h: 3,
            kernel_w: 3,
            kernel: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }
}

/// Weights for every conv layer of a spec, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub convs: Vec<ConvWeights>,
}

/// Standard deviation used for a conv layer with the given fan-in.
pub fn he_scale(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

impl WeightSet {
    pub fn zeros(spec: &ExtractorSpec) -> Self {
        Self {
            convs: spec
                .conv_shapes()
                .into_iter()
                .map(|(i, o)| ConvWeights::zeros(i, o))
                .collect(),
        }
    }

    /// Seeded initialization. Kernel entries are `(2u - 1) * sqrt(3) * s`
    /// with `u` uniform on `[0, 1)` from ChaCha8 seeded by `seed`, and
    /// `s = sqrt(2 / fan_in)`, which gives variance `s^2`. One stream
    /// covers all layers in order; biases are zero.
    pub fn init(spec: &ExtractorSpec, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut set = Self::zeros(spec);
        for conv in &mut set.convs {
            let scale = he_scale(conv.in_channels * conv.kernel_h * conv.kernel_w) * 3f64.sqrt();
            for v in &mut conv.kernel {
                let u: f64 = rng.gen();
                *v = ((2.0 * u - 1.0) * scale) as f32;
            }
        }
        set
    }

    /// Check that the weights fit `spec` and are finite.
    pub fn validate(&self, spec: &ExtractorSpec) -> Result<()> {
        let shapes = spec.conv_shapes();
        if shapes.len() != self.convs.len() {
            return Err(Error::invalid(format!(
                "spec has {} conv layers, weights have {}",
                shapes.len(),
                self.convs.len()
            )));
        }
        for (n, ((inp, out), w)) in shapes.iter().zip(&self.convs).enumerate() {
            if w.in_channels != *inp || w.out_channels != *out || w.kernel_h != 3 || w.kernel_w != 3 {
                return Err(Error::invalid(format!(
                    "conv layer {n}: weights are {}x{}x{}x{}, spec needs {out}x{inp}x3x3",
                    w.out_channels, w.in_channels, w.kernel_h, w.kernel_w
                )));
            }
            if w.kernel.len() != out * inp * 9 || w.bias.len() != *out {
                return Err(Error::invalid(format!("conv layer {n}: data length mismatch")));
            }
            if w.kernel.iter().chain(&w.bias).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("conv layer {n}: non-finite weight")));
            }
        }
        Ok(())
    }
}

pub fn write_weights<W: Write>(mut w: W, spec: &ExtractorSpec, weights: &WeightSet) -> Result<()> {
    weights.validate(spec)?;
    let lines = spec.to_lines();
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&(lines.len() as u32).to_le_bytes())?;
    for line in &lines {
        w.write_all(&(line.len() as u32).to_le_bytes())?;
        w.write_all(line.as_bytes())?;
    }
    for conv in &weights.convs {
        for dim in [conv.out_channels, conv.in_channels, conv.kernel_h, conv.kernel_w] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in conv.kernel.iter().chain(&conv.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!("truncated file while reading {field}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, field: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(format!("{field} too large")))?, field)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_weights<R: Read>(mut r: R) -> Result<(ExtractorSpec, WeightSet)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::format("bad magic"));
    }
    let version = cur.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let count = cur.u32("layer count")? as usize;
    let mut lines = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let len = cur.u32(&format!("spec line {i} length"))? as usize;
        let bytes = cur.take(len, &format!("spec line {i}"))?;
        let line = std::str::from_utf8(bytes)
            .map_err(|_| Error::format(format!("spec line {i} is not UTF-8")))?;
        lines.push(line.to_string());
    }
    let spec = ExtractorSpec::from_lines(&lines)?;
    let mut convs = Vec::new();
    for (n, (inp, out)) in spec.conv_shapes().into_iter().enumerate() {
        let field = |name: &str| format!("conv layer {n} {name}");
        let dims = [
            cur.u32(&field("out"))? as usize,
            cur.u32(&field("in"))? as usize,
            cur.u32(&field("kh"))? as usize,
            cur.u32(&field("kw"))? as usize,
        ];
        if dims != [out, inp, 3, 3] {
            return Err(Error::format(format!(
                "conv layer {n} shape {dims:?} does not match spec ({out}, {inp}, 3, 3)"
            )));
        }
        let kernel = cur.f32s(out * inp * 9, &field("kernel"))?;
        let bias = cur.f32s(out, &field("bias"))?;
        convs.push(ConvWeights {
            out_channels: out,
            in_channels: inp,
            kernel_h: 3,
            kernel_w: 3,
            kernel,
            bias,
        });
    }
    if cur.pos != buf.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after weights",
            buf.len() - cur.pos
        )));
    }
    let weights = WeightSet { convs };
    weights
        .validate(&spec)
        .map_err(|e| Error::format(e.to_string()))?;
    Ok((spec, weights))
}
