use std::fmt;

use crate::error::{Error, Result};

/// One stage of the extractor. Convolutions are 3x3, stride 1, zero pad 1;
/// pools are 2x2 with stride 2 (odd trailing rows/columns are dropped).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv { out_channels: usize },
    Relu,
    MaxPool,
}

/// Activation shape in height, width, channels order.
pub type Shape = (usize, usize, usize);

/// Layer list plus tap positions.
///
/// A tap at position `t` exports the activation after the first `t` layers,
/// so tap 0 is the input image itself. Tapped activations are flattened in
/// row-major HWC order and concatenated in ascending tap order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractorSpec {
    input: Shape,
    layers: Vec<Layer>,
    taps: Vec<usize>,
    shapes: Vec<Shape>,
}

impl ExtractorSpec {
    pub fn new(input: Shape, layers: Vec<Layer>, mut taps: Vec<usize>) -> Result<Self> {
        let (h, w, c) = input;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::invalid("input dimensions must be positive"));
        }
        taps.sort_unstable();
        taps.dedup();
        if taps.is_empty() {
            return Err(Error::invalid("extractor needs at least one tap"));
        }
        if let Some(&t) = taps.iter().find(|&&t| t > layers.len()) {
            return Err(Error::invalid(format!(
                "tap {t} is past the last layer ({} layers)",
                layers.len()
            )));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input);
        let mut cur = input;
        for (i, layer) in layers.iter().enumerate() {
            cur = match *layer {
                Layer::Conv { out_channels: 0 } => {
                    return Err(Error::invalid(format!("layer {i}: conv with zero channels")))
                }
                Layer::Conv { out_channels } => (cur.0, cur.1, out_channels),
                Layer::Relu => cur,
                Layer::MaxPool => {
                    if cur.0 < 2 || cur.1 < 2 {
                        return Err(Error::invalid(format!(
                            "layer {i}: pooling a {}x{} activation leaves no pixels",
                            cur.0, cur.1
                        )));
                    }
                    (cur.0 / 2, cur.1 / 2, cur.2)
                }
            };
            shapes.push(cur);
        }
        Ok(Self {
            input,
            layers,
            taps,
            shapes,
        })
    }

    /// The desk-scale reference network: 32x32 grayscale input,
    /// conv8-relu-pool-conv16-relu(tap)-pool-conv32-relu(tap).
    pub fn reference() -> Self {
        use Layer::*;
        Self::new(
            (32, 32, 1),
            vec![
                Conv { out_channels: 8 },
                Relu,
                MaxPool,
                Conv { out_channels: 16 },
                Relu,
                MaxPool,
                Conv { out_channels: 32 },
                Relu,
            ],
            vec![5, 8],
        )
        .expect("reference spec is valid")
    }

    /// No layers, tap on the input: the features are the flattened pixels.
    pub fn identity(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new((height, width, channels), Vec::new(), vec![0])
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn input_len(&self) -> usize {
        let (h, w, c) = self.input;
        h * w * c
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    /// Activation shape at every position, input first.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Feature dimension D.
    pub fn feature_dim(&self) -> usize {
        self.taps
            .iter()
            .map(|&t| {
                let (h, w, c) = self.shapes[t];
                h * w * c
            })
            .sum()
    }

    /// `(in_channels, out_channels)` of each conv layer, in order.
    pub fn conv_shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::Conv { out_channels } => Some((self.shapes[i].2, *out_channels)),
                _ => None,
            })
            .collect()
    }

    /// Text form, one line per entry: `input H W C`, then `conv N`, `relu`,
    /// `pool` per layer, with `tap` lines placed after the tapped position.
    pub fn to_lines(&self) -> Vec<String> {
        let (h, w, c) = self.input;
        let mut lines = vec![format!("input {h} {w} {c}")];
        for pos in 0..=self.layers.len() {
            if pos > 0 {
                lines.push(match self.layers[pos - 1] {
                    Layer::Conv { out_channels } => format!("conv {out_channels}"),
                    Layer::Relu => "relu".to_string(),
                    Layer::MaxPool => "pool".to_string(),
                });
            }
            if self.taps.contains(&pos) {
                lines.push("tap".to_string());
            }
        }
        lines
    }

    pub fn from_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self> {
        let mut input = None;
        let mut layers = Vec::new();
        let mut taps = Vec::new();
        for (n, raw) in lines.iter().enumerate() {
            let line = raw.as_ref().trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut words = line.split_whitespace();
            let keyword = words.next().unwrap_or_default();
            let args: Vec<&str> = words.collect();
            let parse_num = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::format(format!("line {}: bad number {s:?}", n + 1)))
            };
            match (keyword, args.as_slice()) {
                ("input", [h, w, c]) if input.is_none() && layers.is_empty() => {
                    input = Some((parse_num(h)?, parse_num(w)?, parse_num(c)?));
                }
                ("conv", [k]) => layers.push(Layer::Conv {
                    out_channels: parse_num(k)?,
                }),
                ("relu", []) => layers.push(Layer::Relu),
                ("pool", []) => layers.push(Layer::MaxPool),
                ("tap", []) => taps.push(layers.len()),
                _ => {
                    return Err(Error::format(format!(
                        "line {}: unrecognized spec entry {line:?}",
                        n + 1
                    )))
                }
            }
        }
        let input = input.ok_or_else(|| Error::format("spec has no `input H W C` line"))?;
        Self::new(input, layers, taps)
    }
}

impl fmt::Display for ExtractorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.to_lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}
