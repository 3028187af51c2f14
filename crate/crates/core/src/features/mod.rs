//! Differentiable convolutional feature extractor.
//!
//! Activations are kept in row-major HWC layout throughout, so a tap on the
//! input reproduces the image's own pixel order.

mod spec;
mod weights;

pub use spec::{ExtractorSpec, Layer, Shape};
pub use weights::{
    he_scale, read_weights, write_weights, ConvWeights, WeightSet, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Conv kernel re-laid out as `[ky][kx][in][out]` in f64.
struct PreparedConv {
    cin: usize,
    cout: usize,
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

enum Stage {
    Conv(PreparedConv),
    Relu,
    Pool,
}

/// A spec bound to its weights, ready for forward and backward passes.
pub struct Extractor {
    spec: ExtractorSpec,
    stages: Vec<Stage>,
}

/// Forward activations kept for the backward pass.
pub struct Tape {
    activations: Vec<Vec<f64>>,
    /// Per pool stage: for each output element, the flat input index that won.
    argmax: Vec<Option<Vec<usize>>>,
    features: Vec<f64>,
}

impl Tape {
    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

impl Extractor {
    pub fn new(spec: ExtractorSpec, weights: &WeightSet) -> Result<Self> {
        weights.validate(&spec)?;
        let mut convs = weights.convs.iter();
        let stages = spec
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Conv { .. } => {
                    let w = convs.next().expect("validated");
                    let (cin, cout) = (w.in_channels, w.out_channels);
                    let mut kernel = vec![0.0; 9 * cin * cout];
                    for o in 0..cout {
                        for i in 0..cin {
                            for k in 0..9 {
                                kernel[(k * cin + i) * cout + o] = w.kernel[(o * cin + i) * 9 + k] as f64;
                            }
                        }
                    }
                    Stage::Conv(PreparedConv {
                        cin,
                        cout,
                        kernel,
                        bias: w.bias.iter().map(|&b| b as f64).collect(),
                    })
                }
                Layer::Relu => Stage::Relu,
                Layer::MaxPool => Stage::Pool,
            })
            .collect();
        Ok(Self { spec, stages })
    }

    pub fn spec(&self) -> &ExtractorSpec {
        &self.spec
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim()
    }

    pub fn input_len(&self) -> usize {
        self.spec.input_len()
    }

    fn check_image(&self, image: &ImageTensor) -> Result<()> {
        if image.shape() != self.spec.input_shape() {
            return Err(Error::invalid(format!(
                "image is {:?}, extractor expects {:?}",
                image.shape(),
                self.spec.input_shape()
            )));
        }
        Ok(())
    }

    fn check_pixels(&self, pixels: &[f64]) -> Result<()> {
        if pixels.len() != self.input_len() {
            return Err(Error::invalid(format!(
                "{} pixel values, extractor expects {}",
                pixels.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    pub fn extract(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        self.check_image(image)?;
        Ok(self.forward(image.pixels())?.features)
    }

    /// `Jᵀ u` at `image`.
    pub fn vjp(&self, image: &ImageTensor, cotangent: &[f64]) -> Result<Vec<f64>> {
        self.check_image(image)?;
        let tape = self.forward(image.pixels())?;
        self.backward(&tape, cotangent)
    }

    /// Forward pass over raw HWC pixels (no range check).
    pub fn forward(&self, pixels: &[f64]) -> Result<Tape> {
        self.check_pixels(pixels)?;
        let shapes = self.spec.shapes();
        let mut activations = Vec::with_capacity(self.stages.len() + 1);
        let mut argmax = Vec::with_capacity(self.stages.len());
        activations.push(pixels.to_vec());
        for (l, stage) in self.stages.iter().enumerate() {
            let input = &activations[l];
            let (h, w, _) = shapes[l];
            let (out, arg) = match stage {
                Stage::Conv(conv) => (conv_forward(conv, input, h, w), None),
                Stage::Relu => (input.iter().map(|&v| v.max(0.0)).collect(), None),
                Stage::Pool => {
                    let (o, a) = pool_forward(input, shapes[l], shapes[l + 1]);
                    (o, Some(a))
                }
            };
            activations.push(out);
            argmax.push(arg);
        }
        let mut features = Vec::with_capacity(self.feature_dim());
        for &t in self.spec.taps() {
            features.extend_from_slice(&activations[t]);
        }
        Ok(Tape {
            activations,
            argmax,
            features,
        })
    }

    /// Pull a feature-space cotangent back to pixel space.
    pub fn backward(&self, tape: &Tape, cotangent: &[f64]) -> Result<Vec<f64>> {
        if cotangent.len() != self.feature_dim() {
            return Err(Error::invalid(format!(
                "cotangent has length {}, feature dimension is {}",
                cotangent.len(),
                self.feature_dim()
            )));
        }
        let shapes = self.spec.shapes();
        let taps = self.spec.taps();
        // Offsets of each tap inside the feature vector.
        let mut offsets = Vec::with_capacity(taps.len());
        let mut off = 0;
        for &t in taps {
            let (h, w, c) = shapes[t];
            offsets.push((t, off, h * w * c));
            off += h * w * c;
        }
        let add_tap = |pos: usize, grad: &mut [f64]| {
            for &(t, start, len) in &offsets {
                if t == pos {
                    for (g, u) in grad.iter_mut().zip(&cotangent[start..start + len]) {
                        *g += u;
                    }
                }
            }
        };

        let last = self.stages.len();
        let (h, w, c) = shapes[last];
        let mut grad = vec![0.0; h * w * c];
        add_tap(last, &mut grad);
        for l in (0..last).rev() {
            let (h, w, c) = shapes[l];
            let mut below = vec![0.0; h * w * c];
            match &self.stages[l] {
                Stage::Conv(conv) => conv_backward(conv, &grad, &mut below, h, w),
                Stage::Relu => {
                    for ((b, g), x) in below.iter_mut().zip(&grad).zip(&tape.activations[l]) {
                        if *x > 0.0 {
                            *b = *g;
                        }
                    }
                }
                Stage::Pool => {
                    let arg = tape.argmax[l].as_ref().expect("pool stage records argmax");
                    for (g, &src) in grad.iter().zip(arg) {
                        below[src] += g;
                    }
                }
            }
            grad = below;
            add_tap(l, &mut grad);
        }
        Ok(grad)
    }
}

fn conv_forward(conv: &PreparedConv, input: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (cin, cout) = (conv.cin, conv.cout);
    let mut out = vec![0.0; h * w * cout];
    for y in 0..h {
        for x in 0..w {
            let acc = &mut out[(y * w + x) * cout..(y * w + x + 1) * cout];
            acc.copy_from_slice(&conv.bias);
            for ky in 0..3 {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..3 {
                    let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else {
                        continue;
                    };
                    let px = &input[(iy * w + ix) * cin..(iy * w + ix + 1) * cin];
                    let taps = &conv.kernel[(ky * 3 + kx) * cin * cout..(ky * 3 + kx + 1) * cin * cout];
                    for (i, &v) in px.iter().enumerate() {
                        for (a, k) in acc.iter_mut().zip(&taps[i * cout..(i + 1) * cout]) {
                            *a += v * k;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(conv: &PreparedConv, grad_out: &[f64], grad_in: &mut [f64], h: usize, w: usize) {
    let (cin, cout) = (conv.cin, conv.cout);
    for y in 0..h {
        for x in 0..w {
            let g = &grad_out[(y * w + x) * cout..(y * w + x + 1) * cout];
            for ky in 0..3 {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..3 {
                    let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else {
                        continue;
                    };
                    let px = &mut grad_in[(iy * w + ix) * cin..(iy * w + ix + 1) * cin];
                    let taps = &conv.kernel[(ky * 3 + kx) * cin * cout..(ky * 3 + kx + 1) * cin * cout];
                    for (i, p) in px.iter_mut().enumerate() {
                        *p += taps[i * cout..(i + 1) * cout]
                            .iter()
                            .zip(g)
                            .map(|(k, gv)| k * gv)
                            .sum::<f64>();
                    }
                }
            }
        }
    }
}

/// 2x2 stride-2 max pool; ties go to the first element in row-major order.
fn pool_forward(input: &[f64], (_, w, c): Shape, (oh, ow, _): Shape) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut arg = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * y) * w + 2 * x) * c + ch;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}

/// Feature vector φ(image).
pub fn extract(spec: &ExtractorSpec, weights: &WeightSet, image: &ImageTensor) -> Result<Vec<f64>> {
    Extractor::new(spec.clone(), weights)?.extract(image)
}

/// Vector-Jacobian product `Jᵀ u` of φ at `image`.
pub fn extract_vjp(
    spec: &ExtractorSpec,
    weights: &WeightSet,
    image: &ImageTensor,
    cotangent: &[f64],
) -> Result<Vec<f64>> {
    Extractor::new(spec.clone(), weights)?.vjp(image, cotangent)
}

pub fn init_weights(spec: &ExtractorSpec, seed: u64) -> WeightSet {
    WeightSet::init(spec, seed)
}
