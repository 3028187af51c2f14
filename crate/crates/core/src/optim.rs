//! Deterministic bound-constrained quasi-Newton minimization.
//!
//! The solver is a projected L-BFGS: at each iterate the variables sitting on
//! a bound with the gradient pushing outward are frozen, a limited-memory
//! direction is built on the free variables, and a backtracking Armijo search
//! runs along the projected path `P(x + a d)`. Every evaluated point is
//! feasible, and the accepted objective sequence never increases.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Sufficient-decrease line search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub c1: f64,
    pub backtrack: f64,
    pub max_trials: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        // 60 halvings reach steps of ~1e-18, enough for penalty weights up to
        // 1e9 on unit-scale problems.
        Self {
            c1: 1e-4,
            backtrack: 0.5,
            max_trials: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeConfig {
    pub max_iters: usize,
    /// Stop when the sup-norm of the projected gradient falls to this value.
    pub grad_tol: f64,
    /// Stop when an accepted step moves no coordinate by more than this.
    pub step_tol: f64,
    /// Number of curvature pairs kept.
    pub history_size: usize,
    pub line_search: LineSearchConfig,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            step_tol: 1e-10,
            history_size: 10,
            line_search: LineSearchConfig::default(),
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.grad_tol >= 0.0) || !(self.step_tol >= 0.0) {
            return Err(Error::invalid("tolerances must be nonnegative"));
        }
        if self.history_size == 0 {
            return Err(Error::invalid("history_size must be at least 1"));
        }
        if !(ls.c1 > 0.0 && ls.c1 < 1.0) {
            return Err(Error::invalid("line search c1 must lie in (0, 1)"));
        }
        if !(ls.backtrack > 0.0 && ls.backtrack < 1.0) {
            return Err(Error::invalid("backtracking factor must lie in (0, 1)"));
        }
        if ls.max_trials == 0 {
            return Err(Error::invalid("line search needs at least one trial"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradTol,
    StepTol,
    MaxIters,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradTol => "grad_tol",
            Termination::StepTol => "step_tol",
            Termination::MaxIters => "max_iters",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeTrace {
    /// Accepted steps.
    pub iterations: usize,
    /// Objective at the start point followed by every accepted iterate.
    pub objective_values: Vec<f64>,
    /// Sup-norm of the projected gradient at the returned point.
    pub final_grad_norm: f64,
    pub termination: Termination,
    pub evaluations: usize,
}

impl MinimizeTrace {
    pub fn final_objective(&self) -> f64 {
        *self.objective_values.last().expect("trace holds the start point")
    }
}

/// Closed box `lower[i] <= x[i] <= upper[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("bound vectors differ in length"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::invalid(format!("empty interval at coordinate {i}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    fn project_into(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }
}

/// Objective changes smaller than this are treated as rounding noise by the
/// line search (16 ulp of `f`). Recorded objective values are non-increasing
/// up to this amount.
pub fn rounding_floor(f: f64) -> f64 {
    16.0 * f64::EPSILON * f.abs()
}

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Coordinates that may move: not pinned at a bound by an outward gradient.
fn free_mask(x: &[f64], g: &[f64], bounds: Option<&Bounds>, mask: &mut [bool]) {
    match bounds {
        None => mask.iter_mut().for_each(|m| *m = true),
        Some(b) => {
            for i in 0..x.len() {
                let at_lower = x[i] <= b.lower[i] && g[i] > 0.0;
                let at_upper = x[i] >= b.upper[i] && g[i] < 0.0;
                mask[i] = !(at_lower || at_upper);
            }
        }
    }
}

/// Sup-norm of `x - P(x - g)`.
fn projected_grad_norm(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> f64 {
    match bounds {
        None => inf_norm(g),
        Some(b) => (0..x.len()).fold(0.0, |m, i| {
            let p = (x[i] - g[i]).clamp(b.lower[i], b.upper[i]);
            m.max((x[i] - p).abs())
        }),
    }
}

/// Two-loop recursion on the free coordinates; returns the search direction.
fn lbfgs_direction(g: &[f64], mask: &[bool], history: &VecDeque<CurvaturePair>) -> Vec<f64> {
    let mut q: Vec<f64> = g
        .iter()
        .zip(mask)
        .map(|(gi, &free)| if free { *gi } else { 0.0 })
        .collect();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (pair, a) in history.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter()
        .zip(mask)
        .map(|(v, &free)| if free { -v } else { 0.0 })
        .collect()
}

/// Scaled steepest descent used when no curvature information exists yet.
fn steepest_direction(g: &[f64], mask: &[bool]) -> Vec<f64> {
    let norm = g
        .iter()
        .zip(mask)
        .filter(|(_, &free)| free)
        .map(|(v, _)| v * v)
        .sum::<f64>()
        .sqrt();
    let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
    g.iter()
        .zip(mask)
        .map(|(v, &free)| if free { -v * scale } else { 0.0 })
        .collect()
}

struct Evaluator<F> {
    f: F,
    count: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Evaluator<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        let iterate = self.count;
        self.count += 1;
        let value = (self.f)(x, g);
        if !value.is_finite() {
            return Err(Error::NumericalFailure {
                iterate,
                detail: format!("objective evaluated to {value}"),
            });
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                iterate,
                detail: format!("gradient component {i} is {}", g[i]),
            });
        }
        Ok(value)
    }
}

/// Minimize `f` starting from `x0`, optionally inside `bounds`.
///
/// `f(x, grad)` returns the objective and writes the gradient into `grad`.
pub fn minimize<F>(
    f: F,
    x0: Vec<f64>,
    bounds: Option<&Bounds>,
    cfg: &MinimizeConfig,
) -> Result<(Vec<f64>, MinimizeTrace)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    cfg.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(Error::invalid("cannot minimize over an empty vector"));
    }
    if let Some(b) = bounds {
        if b.len() != n {
            return Err(Error::invalid(format!(
                "bounds have {} coordinates, start point has {n}",
                b.len()
            )));
        }
        if !b.contains(&x0) {
            return Err(Error::invalid("start point lies outside the bounds"));
        }
    }

    let mut eval = Evaluator { f, count: 0 };
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = eval.eval(&x, &mut g)?;

    let mut objective_values = vec![fx];
    let mut history: VecDeque<CurvaturePair> = VecDeque::with_capacity(cfg.history_size);
    let mut mask = vec![true; n];
    let mut x_trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;
    let ls = cfg.line_search;

    let termination = loop {
        if projected_grad_norm(&x, &g, bounds) <= cfg.grad_tol {
            break Termination::GradTol;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIters;
        }
        free_mask(&x, &g, bounds, &mut mask);

        let mut direction = if history.is_empty() {
            steepest_direction(&g, &mask)
        } else {
            let d = lbfgs_direction(&g, &mask, &history);
            if dot(&d, &g) < 0.0 {
                d
            } else {
                history.clear();
                steepest_direction(&g, &mask)
            }
        };

        // Backtracking along the projected path. If a quasi-Newton direction
        // fails, retry once from steepest descent with the memory cleared.
        let accepted = loop {
            let mut alpha = 1.0;
            let mut found = None;
            for _ in 0..ls.max_trials {
                for i in 0..n {
                    x_trial[i] = x[i] + alpha * direction[i];
                }
                if let Some(b) = bounds {
                    b.project_into(&mut x_trial);
                }
                let mut decrease = 0.0;
                let mut moved = false;
                for i in 0..n {
                    let s = x_trial[i] - x[i];
                    decrease += g[i] * s;
                    moved |= s != 0.0;
                }
                if !moved {
                    break;
                }
                if decrease < 0.0 {
                    let f_trial = eval.eval(&x_trial, &mut g_trial)?;
                    if f_trial <= fx + ls.c1 * decrease {
                        found = Some(f_trial);
                        break;
                    }
                    // Below the rounding floor of f the Armijo test only sees
                    // noise; accept a step that shrinks the projected gradient.
                    if (f_trial - fx).abs() <= rounding_floor(fx)
                        && projected_grad_norm(&x_trial, &g_trial, bounds) < projected_grad_norm(&x, &g, bounds)
                    {
                        found = Some(f_trial);
                        break;
                    }
                    // At the rounding floor of f the Armijo test is noise;
                    // accept a non-increasing step that shrinks the gradient.
                    let floor = 4.0 * f64::EPSILON * fx.abs().max(f64::MIN_POSITIVE);
                    if f_trial <= fx
                        && fx - f_trial <= floor
                        && projected_grad_norm(&x_trial, &g_trial, bounds) < projected_grad_norm(&x, &g, bounds)
                    {
                        found = Some(f_trial);
                        break;
                    }
                }
                alpha *= ls.backtrack;
            }
            match found {
                Some(v) => break Some(v),
                None if !history.is_empty() => {
                    history.clear();
                    direction = steepest_direction(&g, &mask);
                }
                None => break None,
            }
        };

        let Some(f_new) = accepted else {
            break Termination::StepTol;
        };

        let s: Vec<f64> = x_trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = inf_norm(&s);
        std::mem::swap(&mut x, &mut x_trial);
        std::mem::swap(&mut g, &mut g_trial);
        fx = f_new;
        objective_values.push(fx);
        iterations += 1;

        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > f64::EPSILON * yy && yy > 0.0 {
            if history.len() == cfg.history_size {
                history.pop_front();
            }
            history.push_back(CurvaturePair { s, y, rho: 1.0 / sy });
        }

        if step <= cfg.step_tol {
            break Termination::StepTol;
        }
    };

    let trace = MinimizeTrace {
        iterations,
        objective_values,
        final_grad_norm: projected_grad_norm(&x, &g, bounds),
        termination,
        evaluations: eval.count,
    };
    Ok((x, trace))
}

/// Central-difference gradient estimate of `f` at `x` with step `h`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NumericalFailure {
                iterate: i,
                detail: format!("non-finite evaluation while differencing coordinate {i}"),
            });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shifted_parabola() {
        let (x, trace) = minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 3.0);
                (x[0] - 3.0).powi(2)
            },
            vec![0.0],
            None,
            &MinimizeConfig::default(),
        )
        .unwrap();
        assert!((x[0] - 3.0).abs() < 1e-8, "{x:?}");
        assert_eq!(trace.termination, Termination::GradTol);
    }

    #[test]
    fn active_lower_bound() {
        let bounds = Bounds::uniform(1, 1.0, 2.0).unwrap();
        let (x, _) = minimize(
            |x, g| {
                g[0] = 2.0 * x[0];
                x[0] * x[0]
            },
            vec![1.5],
            Some(&bounds),
            &MinimizeConfig::default(),
        )
        .unwrap();
        assert_eq!(x[0], 1.0);
    }

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let (x, trace) =
            minimize(rosenbrock, vec![-1.2, 1.0], None, &MinimizeConfig::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5, "{x:?} {trace:?}");
    }

    #[test]
    fn rosenbrock_is_bitwise_deterministic() {
        let cfg = MinimizeConfig::default();
        let a = minimize(rosenbrock, vec![-1.2, 1.0], None, &cfg).unwrap();
        let b = minimize(rosenbrock, vec![-1.2, 1.0], None, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_vector_rejected() {
        let err = minimize(|_, _| 0.0, vec![], None, &MinimizeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn nan_objective_reports_iterate() {
        let err = minimize(
            |x, g| {
                g[0] = 1.0;
                if x[0] < 0.5 {
                    f64::NAN
                } else {
                    x[0]
                }
            },
            vec![1.0],
            None,
            &MinimizeConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::NumericalFailure { iterate, .. } => assert_eq!(iterate, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn start_outside_bounds_rejected() {
        let bounds = Bounds::uniform(1, 0.0, 1.0).unwrap();
        let err = minimize(|_, _| 0.0, vec![2.0], Some(&bounds), &MinimizeConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = MinimizeConfig::default();
        cfg.line_search.c1 = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = MinimizeConfig::default();
        cfg.line_search.backtrack = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = MinimizeConfig {
            history_size: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fd_examples() {
        let g = finite_difference_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
        let g = finite_difference_gradient(|_| 4.2, &[1.0, -2.0, 5.0], 1e-3).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        let g = finite_difference_gradient(|x| x[0].sin(), &[0.0], 1e-5).unwrap();
        assert!((g[0] - 0f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn fd_non_finite() {
        let err = finite_difference_gradient(|x| 1.0 / x[0], &[0.0], 1e-3);
        assert!(err.is_ok(), "1/x is finite at +-h");
        let err = finite_difference_gradient(|x| (x[0] - 1e-3).ln(), &[0.0], 1e-3).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
    }

    fn spd(dim: usize, entries: &[f64]) -> Vec<f64> {
        // A = B Bᵀ + I
        let b = &entries[..dim * dim];
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                a[i * dim + j] = (0..dim).map(|k| b[i * dim + k] * b[j * dim + k]).sum::<f64>();
            }
            a[i * dim + i] += 1.0;
        }
        a
    }

    proptest! {
        #[test]
        fn quadratic_reaches_tight_gradient(
            dim in 1usize..=5,
            entries in prop::collection::vec(-2.0f64..2.0, 25),
            rhs in prop::collection::vec(-5.0f64..5.0, 5),
        ) {
            let a = spd(dim, &entries);
            let b = &rhs[..dim];
            let cfg = MinimizeConfig { max_iters: 200, grad_tol: 1e-8, step_tol: 0.0, ..Default::default() };
            let (x, trace) = minimize(|x, g| {
                let mut f = 0.0;
                for i in 0..dim {
                    let ai: f64 = (0..dim).map(|j| a[i * dim + j] * x[j]).sum();
                    g[i] = ai - b[i];
                    f += 0.5 * x[i] * ai - b[i] * x[i];
                }
                f
            }, vec![0.0; dim], None, &cfg).unwrap();
            prop_assert!(trace.final_grad_norm <= 1e-8, "{trace:?} {x:?}");
        }

        #[test]
        fn trace_monotone_and_feasible(
            center in prop::collection::vec(-3.0f64..3.0, 4),
            start in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let bounds = Bounds::uniform(4, -1.0, 1.0).unwrap();
            let mut feasible = true;
            let (x, trace) = minimize(|x, g| {
                feasible &= x.iter().all(|v| (-1.0..=1.0).contains(v));
                let mut f = 0.0;
                for i in 0..4 {
                    let d = x[i] - center[i];
                    f += d * d * d * d + (i as f64 + 1.0) * d * d;
                    g[i] = 4.0 * d * d * d + 2.0 * (i as f64 + 1.0) * d;
                }
                f
            }, start, Some(&bounds), &MinimizeConfig::default()).unwrap();
            prop_assert!(feasible);
            prop_assert!(bounds.contains(&x));
            prop_assert!(trace.objective_values.windows(2).all(|w| w[1] <= w[0] + rounding_floor(w[0])));
        }
    }
}
