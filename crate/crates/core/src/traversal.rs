//! Budgeted witness minimization over the coefficient vector `r`.
//!
//! For each λ the traversal solves
//!
//! ```text
//! min_r  f(V (e_K + r)) + λ ‖V r‖²
//! ```
//!
//! entirely through the Gram matrix, and the traversed features are
//! `z_t = V (e_K + r)`. A descending λ sweep starts from `r = 0` and
//! warm-starts each solve from the previous solution. The objective is
//! nonconvex, so by default each λ is also solved from the target mean
//! (`z = mean of the target rows`) and the lower objective is kept.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::mmd::{budget, witness_value_and_grad, FeatureMatrix, KernelConfig, WitnessValue};
use crate::optim::{minimize, MinimizeConfig, MinimizeTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalConfig {
    /// Strictly positive, strictly descending.
    pub lambdas: Vec<f64>,
    pub kernel: KernelConfig,
    pub solver: MinimizeConfig,
    /// Also solve each λ from the target mean.
    pub target_restart: bool,
}

impl TraversalConfig {
    pub fn new(lambdas: Vec<f64>, kernel: KernelConfig) -> Self {
        Self {
            lambdas,
            kernel,
            solver: MinimizeConfig::default(),
            target_restart: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::invalid("at least one lambda is required"));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid(format!("lambda {l} is not a positive finite number")));
        }
        if self.lambdas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("lambdas must be strictly descending"));
        }
        self.solver.validate()
    }
}

/// Outcome of one λ solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRecord {
    pub lambda: f64,
    pub r: Vec<f64>,
    pub witness: WitnessValue,
    pub budget: f64,
    /// `witness.value + lambda * budget`.
    pub objective: f64,
    pub trace: MinimizeTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalResult {
    /// Resolved kernel width.
    pub sigma: f64,
    pub records: Vec<LambdaRecord>,
}

impl TraversalResult {
    /// Traversed features for record `i`.
    pub fn z_t(&self, features: &FeatureMatrix, i: usize) -> Result<Vec<f64>> {
        let rec = self
            .records
            .get(i)
            .ok_or_else(|| Error::invalid(format!("no record {i}")))?;
        materialize(features, &rec.r)
    }
}

/// Objective and gradient of the budgeted witness at `r`.
pub fn objective_and_grad(
    r: &[f64],
    features: &FeatureMatrix,
    sigma: f64,
    lambda: f64,
) -> Result<(f64, WitnessValue, f64, Vec<f64>)> {
    let gram = features.require_gram()?;
    let (w, mut grad) = witness_value_and_grad(r, gram, features.m(), features.n(), sigma)?;
    let gr = gram.apply(r);
    let b = r.iter().zip(&gr).map(|(a, c)| a * c).sum::<f64>().max(0.0);
    for (g, v) in grad.iter_mut().zip(&gr) {
        *g += 2.0 * lambda * v;
    }
    Ok((w.value + lambda * b, w, b, grad))
}

pub fn traverse(features: &FeatureMatrix, cfg: &TraversalConfig) -> Result<TraversalResult> {
    cfg.validate()?;
    let gram = features.require_gram()?;
    if features.m() == 0 || features.n() == 0 {
        return Err(Error::invalid("traversal needs non-empty source and target sets"));
    }
    let sigma = cfg.kernel.resolve(gram)?;
    let k = features.k();

    let mut r = vec![0.0; k];
    let mut target_mean = vec![0.0; k];
    target_mean[..features.n()].fill(1.0 / features.n() as f64);
    target_mean[k - 1] = -1.0;
    let mut records = Vec::with_capacity(cfg.lambdas.len());
    for &lambda in &cfg.lambdas {
        let objective = |x: &[f64], g: &mut [f64]| -> f64 {
            match objective_and_grad(x, features, sigma, lambda) {
                Ok((value, _, _, grad)) => {
                    g.copy_from_slice(&grad);
                    value
                }
                Err(_) => f64::NAN,
            }
        };
        let solve = |start: &[f64]| {
            minimize(objective, start.to_vec(), None, &cfg.solver).map_err(|e| e.context(format!("lambda {lambda:e}")))
        };
        let (mut r_star, mut trace) = solve(&r)?;
        if cfg.target_restart {
            let (r_alt, trace_alt) = solve(&target_mean)?;
            if trace_alt.final_objective() < trace.final_objective() {
                (r_star, trace) = (r_alt, trace_alt);
            }
        }
        let witness = witness_value_and_grad(&r_star, gram, features.m(), features.n(), sigma)?.0;
        let b = budget(&r_star, gram)?;
        records.push(LambdaRecord {
            lambda,
            witness,
            budget: b,
            objective: witness.value + lambda * b,
            r: r_star.clone(),
            trace,
        });
        r = r_star;
    }
    Ok(TraversalResult { sigma, records })
}

/// `z_t = V (e_K + r)`.
pub fn materialize(features: &FeatureMatrix, r: &[f64]) -> Result<Vec<f64>> {
    let k = features.k();
    if r.len() != k {
        return Err(Error::invalid(format!("r has length {}, need K = {k}", r.len())));
    }
    let d = features.d();
    let mut z = vec![0.0; d];
    for (i, &ri) in r.iter().enumerate() {
        let c = if i == k - 1 { ri + 1.0 } else { ri };
        if c == 0.0 {
            continue;
        }
        for (zj, vj) in z.iter_mut().zip(features.row(i)) {
            *zj += c * vj;
        }
    }
    Ok(z)
}

/// One parsed line of a traversal record file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordLine {
    pub lambda: f64,
    pub objective: f64,
    pub witness: f64,
    pub budget: f64,
    pub iterations: usize,
}

pub const RECORD_HEADER: &str = "# lambda objective witness budget iterations";

/// Text records, one line per λ, shortest round-trip decimal formatting.
pub fn write_records<W: Write>(mut w: W, result: &TraversalResult) -> Result<()> {
    writeln!(w, "{RECORD_HEADER}")?;
    for rec in &result.records {
        writeln!(
            w,
            "{:e} {:e} {:e} {:e} {}",
            rec.lambda, rec.objective, rec.witness.value, rec.budget, rec.trace.iterations
        )?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<RecordLine>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 5 {
            return Err(Error::format(format!("record line {}: expected 5 columns", n + 1)));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i]
                .parse()
                .map_err(|_| Error::format(format!("record line {}: bad number {:?}", n + 1, cols[i])))
        };
        out.push(RecordLine {
            lambda: num(0)?,
            objective: num(1)?,
            witness: num(2)?,
            budget: num(3)?,
            iterations: cols[4]
                .parse()
                .map_err(|_| Error::format(format!("record line {}: bad iteration count", n + 1)))?,
        });
    }
    Ok(out)
}
