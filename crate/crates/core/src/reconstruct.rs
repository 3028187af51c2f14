//! Feature inversion with a total-variation prior.
//!
//! Recovers pixels `x` minimizing `½‖φ(x) - z‖² + λ_tv · TV_β(x)` inside a
//! pixel box, where
//!
//! ```text
//! TV_β(x) = Σ_{i,j,c} ((x[i][j+1] - x[i][j])² + (x[i+1][j] - x[i][j])²)^(β/2)
//! ```
//!
//! and differences that would leave the image are zero.

use crate::error::{Error, Result};
use crate::features::Extractor;
use crate::image::ImageTensor;
use crate::optim::{minimize, Bounds, MinimizeConfig, MinimizeTrace};

#[derive(Debug, Clone, PartialEq)]
pub enum InitImage {
    MidGray,
    /// Start from a given image, typically the untraversed source image.
    Given(ImageTensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub lambda_tv: f64,
    pub beta: f64,
    /// Closed interval inside `[0, 1]`.
    pub pixel_bounds: (f64, f64),
    pub init: InitImage,
    pub solver: MinimizeConfig,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            lambda_tv: 0.001,
            beta: 2.0,
            pixel_bounds: (0.0, 1.0),
            init: InitImage::MidGray,
            solver: MinimizeConfig::default(),
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_tv >= 0.0) || !self.lambda_tv.is_finite() {
            return Err(Error::invalid("lambda_tv must be a nonnegative number"));
        }
        check_beta(self.beta)?;
        let (lo, hi) = self.pixel_bounds;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(format!("pixel bounds [{lo}, {hi}] must lie within [0, 1]")));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub image: ImageTensor,
    pub final_feature_loss: f64,
    pub final_tv: f64,
    pub trace: MinimizeTrace,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// Forward differences at `(y, x, c)`; zero past the last row or column.
#[inline]
fn diffs(p: &[f64], h: usize, w: usize, ch: usize, y: usize, x: usize, c: usize) -> (f64, f64) {
    let at = |yy: usize, xx: usize| p[(yy * w + xx) * ch + c];
    let v = at(y, x);
    let dx = if x + 1 < w { at(y, x + 1) - v } else { 0.0 };
    let dy = if y + 1 < h { at(y + 1, x) - v } else { 0.0 };
    (dx, dy)
}

fn tv_pixels(p: &[f64], (h, w, ch): (usize, usize, usize), beta: f64) -> f64 {
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let (dx, dy) = diffs(p, h, w, ch, y, x, c);
                let s = dx * dx + dy * dy;
                total += if beta == 2.0 { s } else { s.powf(beta / 2.0) };
            }
        }
    }
    total
}

/// Gradient of the TV term, accumulated into `out`, scaled by `weight`.
fn tv_grad_pixels(p: &[f64], (h, w, ch): (usize, usize, usize), beta: f64, weight: f64, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let (dx, dy) = diffs(p, h, w, ch, y, x, c);
                let s = dx * dx + dy * dy;
                if s == 0.0 {
                    continue;
                }
                // d/ds s^(β/2) = (β/2) s^(β/2 - 1), times ds/d(dx) = 2 dx
                let coef = weight * if beta == 2.0 { 2.0 } else { beta * s.powf(beta / 2.0 - 1.0) };
                let idx = (y * w + x) * ch + c;
                out[idx] -= coef * (dx + dy);
                if x + 1 < w {
                    out[idx + ch] += coef * dx;
                }
                if y + 1 < h {
                    out[idx + w * ch] += coef * dy;
                }
            }
        }
    }
}

pub fn tv(image: &ImageTensor, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(tv_pixels(image.pixels(), image.shape(), beta))
}

/// Exact gradient of [`tv`]. Where both differences vanish the term
/// contributes nothing (for β < 2 this picks the zero subgradient).
pub fn tv_grad(image: &ImageTensor, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let mut g = vec![0.0; image.pixels().len()];
    tv_grad_pixels(image.pixels(), image.shape(), beta, 1.0, &mut g);
    Ok(g)
}

/// Full inversion objective at raw pixels, gradient written to `grad`.
/// Returns `(objective, feature_loss, tv)`.
pub fn objective(
    extractor: &Extractor,
    z_t: &[f64],
    pixels: &[f64],
    lambda_tv: f64,
    beta: f64,
    grad: &mut [f64],
) -> Result<(f64, f64, f64)> {
    let tape = extractor.forward(pixels)?;
    let residual: Vec<f64> = tape.features().iter().zip(z_t).map(|(a, b)| a - b).collect();
    let loss = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
    let g = extractor.backward(&tape, &residual)?;
    grad.copy_from_slice(&g);
    let shape = extractor.spec().input_shape();
    let t = if lambda_tv > 0.0 {
        tv_grad_pixels(pixels, shape, beta, lambda_tv, grad);
        tv_pixels(pixels, shape, beta)
    } else {
        0.0
    };
    Ok((loss + lambda_tv * t, loss, t))
}

pub fn invert(extractor: &Extractor, z_t: &[f64], cfg: &ReconstructionConfig) -> Result<ReconstructionResult> {
    cfg.validate()?;
    if z_t.len() != extractor.feature_dim() {
        return Err(Error::invalid(format!(
            "target features have length {}, extractor produces {}",
            z_t.len(),
            extractor.feature_dim()
        )));
    }
    if z_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite target feature"));
    }
    let (h, w, c) = extractor.spec().input_shape();
    let (lo, hi) = cfg.pixel_bounds;
    let x0 = match &cfg.init {
        InitImage::MidGray => vec![(0.5f64).clamp(lo, hi); h * w * c],
        InitImage::Given(img) => {
            if img.shape() != (h, w, c) {
                return Err(Error::invalid(format!(
                    "initial image is {:?}, extractor expects {:?}",
                    img.shape(),
                    (h, w, c)
                )));
            }
            img.pixels().iter().map(|v| v.clamp(lo, hi)).collect()
        }
    };
    let bounds = Bounds::uniform(x0.len(), lo, hi)?;
    let (lambda_tv, beta) = (cfg.lambda_tv, cfg.beta);
    let f = |x: &[f64], g: &mut [f64]| -> f64 {
        objective(extractor, z_t, x, lambda_tv, beta, g)
            .map(|v| v.0)
            .unwrap_or(f64::NAN)
    };
    let (x, trace) = minimize(f, x0, Some(&bounds), &cfg.solver)?;
    let mut scratch = vec![0.0; x.len()];
    let (_, loss, t) = objective(extractor, z_t, &x, lambda_tv, beta, &mut scratch)?;
    let final_tv = if lambda_tv > 0.0 { t } else { tv_pixels(&x, (h, w, c), beta) };
    Ok(ReconstructionResult {
        image: ImageTensor::new(h, w, c, x)?,
        final_feature_loss: loss,
        final_tv,
        trace,
    })
}
