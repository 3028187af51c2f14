//! Pixel-space adversarial baseline: the smallest perturbation that moves a
//! linear classifier on extracted features, traded off by `c_adv ‖δ‖²`.

use std::io::Write;

use super::{predict, ClassifierModel};
use crate::error::{Error, Result};
use crate::features::Extractor;
use crate::image::ImageTensor;
use crate::optim::{minimize, Bounds, MinimizeConfig};

/// Which way to move the decision value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Push {
    Increase,
    Decrease,
}

impl Push {
    /// Coefficient of the decision value in the minimized objective.
    fn sign(self) -> f64 {
        match self {
            Push::Increase => -1.0,
            Push::Decrease => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialResult {
    pub c_adv: f64,
    pub delta: Vec<f64>,
    pub perturbed: ImageTensor,
    pub decision_value: f64,
    pub l2_pixel_distance: f64,
}

/// Relative decision tolerance and step budget of [`match_regularizer`].
pub const MATCH_REL_TOL: f64 = 0.01;
pub const MATCH_MAX_STEPS: usize = 40;

/// `sign · (w·φ(y) + b) + c ‖y - x‖²` at perturbed pixels `y`, gradient into
/// `grad`.
pub fn adversarial_objective(
    extractor: &Extractor,
    model: &ClassifierModel,
    original: &[f64],
    perturbed: &[f64],
    c_adv: f64,
    push: Push,
    grad: &mut [f64],
) -> Result<f64> {
    let tape = extractor.forward(perturbed)?;
    let (decision, _) = predict(model, tape.features())?;
    let sign = push.sign();
    let cot: Vec<f64> = model.w.iter().map(|w| sign * w).collect();
    let g = extractor.backward(&tape, &cot)?;
    let mut penalty = 0.0;
    for i in 0..grad.len() {
        let d = perturbed[i] - original[i];
        penalty += d * d;
        grad[i] = g[i] + 2.0 * c_adv * d;
    }
    Ok(sign * decision + c_adv * penalty)
}

pub fn adversarial_perturb(
    extractor: &Extractor,
    model: &ClassifierModel,
    image: &ImageTensor,
    c_adv: f64,
    push: Push,
    cfg: &MinimizeConfig,
) -> Result<AdversarialResult> {
    if !(c_adv > 0.0) || !c_adv.is_finite() {
        return Err(Error::invalid(format!("c_adv must be positive, got {c_adv}")));
    }
    if model.dim() != extractor.feature_dim() {
        return Err(Error::invalid(format!(
            "model expects D = {}, extractor produces {}",
            model.dim(),
            extractor.feature_dim()
        )));
    }
    if image.shape() != extractor.spec().input_shape() {
        return Err(Error::invalid("image shape does not match the extractor"));
    }
    let x = image.pixels();
    let bounds = Bounds::uniform(x.len(), 0.0, 1.0)?;
    let f = |y: &[f64], g: &mut [f64]| {
        adversarial_objective(extractor, model, x, y, c_adv, push, g).unwrap_or(f64::NAN)
    };
    let (y, _) = minimize(f, x.to_vec(), Some(&bounds), cfg)?;
    let (h, w, c) = image.shape();
    let perturbed = ImageTensor::new(h, w, c, y)?;
    let delta: Vec<f64> = perturbed.pixels().iter().zip(x).map(|(a, b)| a - b).collect();
    let (decision_value, _) = predict(model, &extractor.extract(&perturbed)?)?;
    let l2_pixel_distance = perturbed.l2_distance(image)?;
    Ok(AdversarialResult {
        c_adv,
        delta,
        perturbed,
        decision_value,
        l2_pixel_distance,
    })
}

/// Bisect `log10 c_adv` over `[-12, 12]` until the adversarial decision value
/// is within 1% of `target_decision` (or the step budget runs out).
pub fn match_regularizer(
    extractor: &Extractor,
    model: &ClassifierModel,
    image: &ImageTensor,
    target_decision: f64,
    cfg: &MinimizeConfig,
) -> Result<AdversarialResult> {
    let (baseline, _) = predict(model, &extractor.extract(image)?)?;
    let push = if target_decision >= baseline {
        Push::Increase
    } else {
        Push::Decrease
    };
    let tol = MATCH_REL_TOL * target_decision.abs();
    let close = |r: &AdversarialResult| (r.decision_value - target_decision).abs() <= tol;
    // Signed progress toward the target; positive means overshoot.
    let excess = |r: &AdversarialResult| match push {
        Push::Increase => r.decision_value - target_decision,
        Push::Decrease => target_decision - r.decision_value,
    };

    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    let at_hi = adversarial_perturb(extractor, model, image, 10f64.powf(hi), push, cfg)?;
    if close(&at_hi) {
        return Ok(at_hi);
    }
    let at_lo = adversarial_perturb(extractor, model, image, 10f64.powf(lo), push, cfg)?;
    if close(&at_lo) {
        return Ok(at_lo);
    }
    if excess(&at_lo) < 0.0 || excess(&at_hi) > 0.0 {
        return Err(Error::NoMatch(format!(
            "target decision {target_decision} is outside the reachable range [{}, {}]",
            at_hi.decision_value.min(at_lo.decision_value),
            at_hi.decision_value.max(at_lo.decision_value)
        )));
    }
    let mut best = at_hi;
    for _ in 0..MATCH_MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let res = adversarial_perturb(extractor, model, image, 10f64.powf(mid), push, cfg)?;
        if close(&res) {
            return Ok(res);
        }
        // Smaller c_adv moves further.
        if excess(&res) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (res.decision_value - target_decision).abs() < (best.decision_value - target_decision).abs() {
            best = res;
        }
    }
    Ok(best)
}

/// One text line: `c_adv decision l2`.
pub fn write_adversarial_record<W: Write>(mut w: W, result: &AdversarialResult) -> Result<()> {
    writeln!(w, "# c_adv decision l2")?;
    writeln!(
        w,
        "{:e} {:e} {:e}",
        result.c_adv, result.decision_value, result.l2_pixel_distance
    )?;
    Ok(())
}
