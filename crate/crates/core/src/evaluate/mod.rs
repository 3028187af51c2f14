//! Label-change measurement: linear SVM with Platt calibration, decision
//! tracking across a traversal sweep, and a pixel-space adversarial baseline.

mod adversarial;
mod platt;
mod svm;

pub use adversarial::{
    adversarial_objective, adversarial_perturb, match_regularizer, write_adversarial_record,
    AdversarialResult, Push, MATCH_MAX_STEPS, MATCH_REL_TOL,
};
pub use platt::{platt_fit, platt_probability};
pub use svm::{svm_objective, train_svm, LinearSvm};

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmd::FeatureMatrix;
use crate::traversal::{materialize, TraversalResult};

/// Linear classifier over features with its Platt calibration.
///
/// `probability` is the calibrated probability of the positive class, the
/// class with positive decision values. `trained_on` records what the
/// positive and negative labels mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    pub trained_on: String,
}

impl ClassifierModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

pub fn predict(model: &ClassifierModel, z: &[f64]) -> Result<(f64, f64)> {
    if z.len() != model.dim() {
        return Err(Error::invalid(format!(
            "feature vector has length {}, model expects {}",
            z.len(),
            model.dim()
        )));
    }
    let decision = model.w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + model.b;
    Ok((decision, platt_probability(decision, model.platt_a, model.platt_b)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    /// `f64::INFINITY` marks the untraversed baseline (`r = 0`).
    pub lambda: f64,
    pub decision: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub baseline: SweepRecord,
    pub records: Vec<SweepRecord>,
}

impl SweepReport {
    /// Baseline followed by the per-λ records.
    pub fn all(&self) -> impl Iterator<Item = &SweepRecord> {
        std::iter::once(&self.baseline).chain(&self.records)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# lambda decision probability")?;
        for r in self.all() {
            writeln!(w, "{:e} {:e} {:e}", r.lambda, r.decision, r.probability)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Result<Vec<f64>> = line
                .split_whitespace()
                .map(|c| c.parse().map_err(|_| Error::format(format!("sweep line {}: bad number {c:?}", n + 1))))
                .collect();
            match cols?.as_slice() {
                &[lambda, decision, probability] => rows.push(SweepRecord {
                    lambda,
                    decision,
                    probability,
                }),
                _ => return Err(Error::format(format!("sweep line {}: expected 3 columns", n + 1))),
            }
        }
        if rows.is_empty() {
            return Err(Error::format("sweep report has no baseline row"));
        }
        let baseline = rows.remove(0);
        Ok(Self {
            baseline,
            records: rows,
        })
    }
}

/// Classifier outputs at the untraversed input and at every λ's `z_t`.
pub fn sweep_decisions(
    model: &ClassifierModel,
    traversal: &TraversalResult,
    features: &FeatureMatrix,
) -> Result<SweepReport> {
    sweep_coefficients(
        model,
        traversal.records.iter().map(|rec| (rec.lambda, rec.r.as_slice())),
        features,
    )
}

/// As [`sweep_decisions`], from `(λ, r)` pairs.
pub fn sweep_coefficients<'a, I>(model: &ClassifierModel, coefficients: I, features: &FeatureMatrix) -> Result<SweepReport>
where
    I: IntoIterator<Item = (f64, &'a [f64])>,
{
    if model.dim() != features.d() {
        return Err(Error::invalid(format!(
            "model expects D = {}, features have D = {}",
            model.dim(),
            features.d()
        )));
    }
    let record = |lambda: f64, r: &[f64]| -> Result<SweepRecord> {
        let z = materialize(features, r)?;
        let (decision, probability) = predict(model, &z)?;
        Ok(SweepRecord {
            lambda,
            decision,
            probability,
        })
    };
    let baseline = record(f64::INFINITY, &vec![0.0; features.k()])?;
    let records = coefficients
        .into_iter()
        .map(|(lambda, r)| record(lambda, r))
        .collect::<Result<_>>()?;
    Ok(SweepReport { baseline, records })
}
