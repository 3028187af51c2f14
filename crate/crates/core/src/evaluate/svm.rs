//! Linear soft-margin SVM.
//!
//! Minimizes `½‖w‖² + C Σ max(0, 1 - y_i (w·x_i + b))` with the bias left
//! unregularized. Training solves the dual by sequential minimal optimization
//! (maximal-violating-pair selection with second-order choice of the partner
//! index), which is deterministic and converges to tight KKT tolerances on
//! the small sets used here.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
    /// Dual objective `½ αᵀQα - Σα` recorded once per epoch (N SMO steps);
    /// non-increasing.
    pub dual_trace: Vec<f64>,
    pub iterations: usize,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Primal objective at `(w, b)`.
pub fn svm_objective(features: &[Vec<f64>], labels: &[f64], c_reg: f64, w: &[f64], b: f64) -> f64 {
    let hinge: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c_reg * hinge
}

fn validate(features: &[Vec<f64>], labels: &[f64], c_reg: f64) -> Result<usize> {
    if !(c_reg > 0.0) || !c_reg.is_finite() {
        return Err(Error::invalid(format!("c_reg must be positive, got {c_reg}")));
    }
    if features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let d = features.first().map(Vec::len).ok_or_else(|| Error::invalid("no training data"))?;
    if features.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("feature vectors differ in length"));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid(format!("labels must be +1 or -1, got {y}")));
    }
    if !labels.contains(&1.0) || !labels.contains(&-1.0) {
        return Err(Error::invalid("training data must contain both classes"));
    }
    Ok(d)
}

pub fn train_svm(features: &[Vec<f64>], labels: &[f64], c_reg: f64) -> Result<LinearSvm> {
    let d = validate(features, labels, c_reg)?;
    let n = features.len();
    let y = labels;
    let mut kmat = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = dot(&features[i], &features[j]);
            kmat[i * n + j] = v;
            kmat[j * n + i] = v;
        }
    }
    let kmax = (0..n).map(|i| kmat[i * n + i]).fold(0.0f64, f64::max);
    let tol = 1e-12 * (1.0f64).max(c_reg * n as f64 * kmax);
    let c = c_reg;
    const TAU: f64 = 1e-12;

    let mut alpha = vec![0.0; n];
    // Gradient of the dual: Qα - e.
    let mut grad = vec![-1.0; n];
    let dual = |alpha: &[f64], grad: &[f64]| -> f64 {
        0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
    };
    let mut dual_trace = vec![0.0];
    let max_iter = 1000 * n + 100_000;
    let mut iterations = 0;
    let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if in_up(t, &alpha) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            if !in_low(t, &alpha) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let diff = gmax - v;
            if diff > 0.0 {
                let mut a = kmat[i * n + i] + kmat[t * n + t] - 2.0 * kmat[i * n + t];
                if a <= 0.0 {
                    a = TAU;
                }
                let score = -diff * diff / a;
                if score < best {
                    best = score;
                    j_sel = Some(t);
                }
            }
        }
        if gmax - gmin < tol {
            break;
        }
        let Some(j) = j_sel else { break };

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = kmat[i * n + j];
        if y[i] != y[j] {
            let quad = (kmat[i * n + i] + kmat[j * n + j] - 2.0 * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (kmat[i * n + i] + kmat[j * n + j] - 2.0 * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kmat[t * n + i] * di + y[j] * kmat[t * n + j] * dj);
        }
        iterations += 1;
        if iterations % n == 0 {
            dual_trace.push(dual(&alpha, &grad));
        }
    }
    dual_trace.push(dual(&alpha, &grad));

    // Bias from the free support vectors, or the midpoint of the feasible
    // interval when none are free.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut nfree, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nfree += 1;
            sum_free += yg;
        }
    }
    let rho = if nfree > 0 {
        sum_free / nfree as f64
    } else {
        0.5 * (ub + lb)
    };

    let mut w = vec![0.0; d];
    for t in 0..n {
        if alpha[t] != 0.0 {
            let coef = alpha[t] * y[t];
            for (wk, xk) in w.iter_mut().zip(&features[t]) {
                *wk += coef * xk;
            }
        }
    }
    Ok(LinearSvm {
        w,
        b: -rho,
        dual_trace,
        iterations,
    })
}
