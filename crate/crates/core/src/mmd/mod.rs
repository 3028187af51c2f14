//! RBF kernel, Gram precomputation and the empirical MMD witness.
//!
//! The witness compares a point against the source and target sets:
//!
//! ```text
//! f(z) = (1/m) Σ_i k(src_i, z) - (1/n) Σ_j k(tgt_j, z),   k(a, b) = exp(-‖a - b‖² / σ)
//! ```
//!
//! Negative values mean `z` looks more like the target set. For points of the
//! form `z = V (e_K + r)` every distance is a quadratic form in the Gram
//! matrix `G = V Vᵀ` (rows of `V` are feature vectors), so with `G` in hand
//! the witness and its gradient cost O(K²) regardless of feature dimension.

mod store;

pub use store::{
    features_section_len, read_features, read_vector, write_features, write_gram_section,
    write_vector, FEATURES_MAGIC,
    FEATURES_VERSION, GRAM_MAGIC,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the RBF width σ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelConfig {
    Explicit(f64),
    MedianHeuristic,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::MedianHeuristic
    }
}

impl KernelConfig {
    pub fn resolve(&self, gram: &Gram) -> Result<f64> {
        match *self {
            KernelConfig::Explicit(s) if s > 0.0 && s.is_finite() => Ok(s),
            KernelConfig::Explicit(s) => Err(Error::invalid(format!("sigma must be positive, got {s}"))),
            KernelConfig::MedianHeuristic => median_heuristic_sigma(gram),
        }
    }
}

/// Symmetric K×K matrix of row inner products, stored row-major in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    k: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn from_data(k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * k {
            return Err(Error::invalid(format!("{} values for a {k}x{k} Gram matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite Gram entry"));
        }
        Ok(Self { k, data })
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `G v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.k).map(|i| dot(self.row(i), v)).collect()
    }

    /// Squared distance between rows `i` and `j` of the underlying matrix.
    pub fn sq_distance(&self, i: usize, j: usize) -> f64 {
        (self.get(i, i) + self.get(j, j) - 2.0 * self.get(i, j)).max(0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-‖a - b‖² / σ)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "kernel arguments have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok((-sq_dist(a, b) / sigma).exp())
}

/// Gram matrix of the rows of a row-major `k × d` matrix.
pub fn gram(rows: &[f64], k: usize, d: usize) -> Result<Gram> {
    if rows.len() != k * d {
        return Err(Error::invalid(format!("{} values for a {k}x{d} matrix", rows.len())));
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    let mut data = vec![0.0; k * k];
    for i in 0..k {
        let ri = &rows[i * d..(i + 1) * d];
        for j in i..k {
            let v = dot(ri, &rows[j * d..(j + 1) * d]);
            data[i * k + j] = v;
            data[j * k + i] = v;
        }
    }
    Ok(Gram { k, data })
}

/// Median over pairs `i < j` of the squared row distances, falling back to
/// the mean when the median is zero.
pub fn median_heuristic_sigma(gram: &Gram) -> Result<f64> {
    let k = gram.size();
    if k < 2 {
        return Err(Error::invalid("median heuristic needs at least two rows"));
    }
    let mut d: Vec<f64> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .map(|(i, j)| gram.sq_distance(i, j))
        .collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    if median > 0.0 {
        return Ok(median);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    if mean > 0.0 {
        Ok(mean)
    } else {
        Err(Error::DegenerateData("all feature rows are identical".into()))
    }
}

/// Feature matrix with rows ordered `[targets (n), sources (m), test]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<f64>,
    d: usize,
    m: usize,
    n: usize,
    gram: Option<Gram>,
}

impl FeatureMatrix {
    /// Build from row-major data. `K = m + n + 1` rows of length `d`.
    pub fn from_rows(rows: Vec<f64>, d: usize, m: usize, n: usize) -> Result<Self> {
        let k = m + n + 1;
        if d == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if rows.len() != k * d {
            return Err(Error::invalid(format!(
                "{} values, expected K*D = {k}*{d} with K = m + n + 1",
                rows.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Self {
            rows,
            d,
            m,
            n,
            gram: None,
        })
    }

    pub fn from_sets(targets: &[Vec<f64>], sources: &[Vec<f64>], test: &[f64]) -> Result<Self> {
        let d = test.len();
        let mut rows = Vec::with_capacity((targets.len() + sources.len() + 1) * d);
        for (kind, set) in [("target", targets), ("source", sources)] {
            for (i, v) in set.iter().enumerate() {
                if v.len() != d {
                    return Err(Error::invalid(format!("{kind} {i} has length {}, test has {d}", v.len())));
                }
                rows.extend_from_slice(v);
            }
        }
        rows.extend_from_slice(test);
        Self::from_rows(rows, d, sources.len(), targets.len())
    }

    pub fn with_gram(mut self) -> Result<Self> {
        self.compute_gram()?;
        Ok(self)
    }

    pub fn compute_gram(&mut self) -> Result<&Gram> {
        let g = gram(&self.rows, self.k(), self.d)?;
        Ok(self.gram.insert(g))
    }

    pub fn set_gram(&mut self, g: Gram) -> Result<()> {
        if g.size() != self.k() {
            return Err(Error::invalid(format!(
                "Gram is {0}x{0}, feature matrix has K = {1}",
                g.size(),
                self.k()
            )));
        }
        self.gram = Some(g);
        Ok(())
    }

    pub fn gram(&self) -> Option<&Gram> {
        self.gram.as_ref()
    }

    pub fn require_gram(&self) -> Result<&Gram> {
        self.gram
            .as_ref()
            .ok_or_else(|| Error::Precondition("Gram matrix has not been computed".into()))
    }

    pub fn k(&self) -> usize {
        self.m + self.n + 1
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of source rows.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of target rows.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, j: usize) -> &[f64] {
        self.row(j)
    }

    pub fn source(&self, i: usize) -> &[f64] {
        self.row(self.n + i)
    }

    pub fn test_row(&self) -> &[f64] {
        self.row(self.k() - 1)
    }

    /// The same data with source and target blocks exchanged.
    pub fn swapped(&self) -> Self {
        let d = self.d;
        let mut rows = Vec::with_capacity(self.rows.len());
        rows.extend_from_slice(&self.rows[self.n * d..(self.n + self.m) * d]);
        rows.extend_from_slice(&self.rows[..self.n * d]);
        rows.extend_from_slice(self.test_row());
        let gram = self.gram.as_ref().map(|g| {
            let k = self.k();
            let perm: Vec<usize> = (self.n..self.n + self.m)
                .chain(0..self.n)
                .chain(std::iter::once(k - 1))
                .collect();
            let perm = &perm;
            let data = (0..k)
                .flat_map(|i| perm.iter().map(move |&j| g.get(perm[i], j)))
                .collect();
            Gram { k, data }
        });
        Self {
            rows,
            d,
            m: self.n,
            n: self.m,
            gram,
        }
    }
}

/// Witness value split into its two mean-kernel terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessValue {
    pub value: f64,
    pub source_term: f64,
    pub target_term: f64,
}

impl WitnessValue {
    fn new(source_term: f64, target_term: f64) -> Self {
        Self {
            value: source_term - target_term,
            source_term,
            target_term,
        }
    }
}

fn check_blocks(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("witness needs non-empty source and target sets"));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// Witness evaluated directly in feature space.
pub fn witness_direct(z: &[f64], features: &FeatureMatrix, sigma: f64) -> Result<WitnessValue> {
    check_blocks(features.m(), features.n())?;
    check_sigma(sigma)?;
    if z.len() != features.d() {
        return Err(Error::invalid(format!(
            "point has length {}, features have D = {}",
            z.len(),
            features.d()
        )));
    }
    let src = (0..features.m())
        .map(|i| (-sq_dist(features.source(i), z) / sigma).exp())
        .sum::<f64>()
        / features.m() as f64;
    let tgt = (0..features.n())
        .map(|j| (-sq_dist(features.target(j), z) / sigma).exp())
        .sum::<f64>()
        / features.n() as f64;
    Ok(WitnessValue::new(src, tgt))
}

/// Shared pieces of the factored witness at a given `r`.
struct Factored {
    /// `G w` with `w = e_K + r`.
    gw: Vec<f64>,
    /// Kernel value of every non-test row against `V w`.
    kernel: Vec<f64>,
}

fn check_factored(r: &[f64], gram: &Gram, m: usize, n: usize, sigma: f64) -> Result<()> {
    check_blocks(m, n)?;
    check_sigma(sigma)?;
    let k = m + n + 1;
    if gram.size() != k {
        return Err(Error::invalid(format!("Gram is {0}x{0}, need K = m + n + 1 = {k}", gram.size())));
    }
    if r.len() != k {
        return Err(Error::invalid(format!("r has length {}, need K = {k}", r.len())));
    }
    Ok(())
}

fn factored(r: &[f64], gram: &Gram, sigma: f64) -> Factored {
    let k = gram.size();
    let mut w = r.to_vec();
    w[k - 1] += 1.0;
    let gw = gram.apply(&w);
    let wgw = dot(&w, &gw);
    // (e_i - w)ᵀ G (e_i - w) = G_ii - 2 (G w)_i + wᵀ G w
    let kernel = (0..k - 1)
        .map(|i| {
            let q = (gram.get(i, i) - 2.0 * gw[i] + wgw).max(0.0);
            (-q / sigma).exp()
        })
        .collect();
    Factored { gw, kernel }
}

/// Witness at `V (e_K + r)` computed from the Gram matrix alone.
pub fn witness_factored(r: &[f64], gram: &Gram, m: usize, n: usize, sigma: f64) -> Result<WitnessValue> {
    check_factored(r, gram, m, n, sigma)?;
    let f = factored(r, gram, sigma);
    let tgt = f.kernel[..n].iter().sum::<f64>() / n as f64;
    let src = f.kernel[n..].iter().sum::<f64>() / m as f64;
    Ok(WitnessValue::new(src, tgt))
}

/// Gradient of [`witness_factored`] with respect to `r`.
pub fn witness_grad_r(r: &[f64], gram: &Gram, m: usize, n: usize, sigma: f64) -> Result<Vec<f64>> {
    Ok(witness_value_and_grad(r, gram, m, n, sigma)?.1)
}

/// Witness and its `r`-gradient in one pass.
///
/// A term with displacement `d = e_i - e_K - r` contributes
/// `(2/σ) k_i G d` scaled by `+1/m` (source) or `-1/n` (target).
pub fn witness_value_and_grad(
    r: &[f64],
    gram: &Gram,
    m: usize,
    n: usize,
    sigma: f64,
) -> Result<(WitnessValue, Vec<f64>)> {
    check_factored(r, gram, m, n, sigma)?;
    let k = gram.size();
    let f = factored(r, gram, sigma);
    // coef_i = sign_i * k_i * 2/σ; then grad = G coef - (Σ coef) G w
    let mut coef = vec![0.0; k];
    for (i, &kv) in f.kernel.iter().enumerate() {
        let weight = if i < n { -1.0 / n as f64 } else { 1.0 / m as f64 };
        coef[i] = weight * kv * 2.0 / sigma;
    }
    let total: f64 = coef.iter().sum();
    let gc = gram.apply(&coef);
    let grad = gc.iter().zip(&f.gw).map(|(a, b)| a - total * b).collect();
    let tgt = f.kernel[..n].iter().sum::<f64>() / n as f64;
    let src = f.kernel[n..].iter().sum::<f64>() / m as f64;
    Ok((WitnessValue::new(src, tgt), grad))
}

fn check_budget(r: &[f64], gram: &Gram) -> Result<()> {
    if r.len() != gram.size() {
        return Err(Error::invalid(format!("r has length {}, Gram is {1}x{1}", r.len(), gram.size())));
    }
    Ok(())
}

/// `‖V r‖² = rᵀ G r`.
pub fn budget(r: &[f64], gram: &Gram) -> Result<f64> {
    check_budget(r, gram)?;
    Ok(dot(r, &gram.apply(r)).max(0.0))
}

/// `2 G r`.
pub fn budget_grad(r: &[f64], gram: &Gram) -> Result<Vec<f64>> {
    check_budget(r, gram)?;
    Ok(gram.apply(r).into_iter().map(|v| 2.0 * v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(src: f64, tgt: f64, test: f64) -> FeatureMatrix {
        FeatureMatrix::from_sets(&[vec![tgt]], &[vec![src]], &[test])
            .unwrap()
            .with_gram()
            .unwrap()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(rbf_kernel(&[1.5, -2.0], &[1.5, -2.0], 0.3).unwrap(), 1.0);
        assert!((rbf_kernel(&[0.0], &[2.0], 1.0).unwrap() - 0.018_315_638_888_734_18).abs() < 1e-15);
        assert!((rbf_kernel(&[0.0], &[2.0], 1e12).unwrap() - 1.0).abs() < 1e-11);
        assert!(rbf_kernel(&[0.0], &[2.0, 1.0], 1.0).is_err());
        assert!(rbf_kernel(&[0.0], &[2.0], 0.0).is_err());
    }

    #[test]
    fn gram_examples() {
        let id = gram(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3, 3).unwrap();
        assert_eq!(id.data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let dup = gram(&[1.0, 2.0, 1.0, 2.0, 0.5, 0.0], 3, 2).unwrap();
        assert_eq!(dup.get(0, 0), dup.get(1, 1));
        assert_eq!(dup.get(0, 1), dup.get(0, 0));
        assert!(gram(&[f64::NAN], 1, 1).is_err());
    }

    #[test]
    fn median_examples() {
        let two = gram(&[0.0, 2.0], 2, 1).unwrap();
        assert_eq!(median_heuristic_sigma(&two).unwrap(), 4.0);
        let three = gram(&[0.0, 1.0, 2.0], 3, 1).unwrap();
        assert_eq!(median_heuristic_sigma(&three).unwrap(), 1.0);
        let same = gram(&[1.0, 1.0, 1.0, 1.0], 2, 2).unwrap();
        assert!(matches!(median_heuristic_sigma(&same), Err(Error::DegenerateData(_))));
        // six of ten pair distances are zero: median 0, mean 0.4
        let mostly = gram(&[0.0, 0.0, 0.0, 0.0, 1.0], 5, 1).unwrap();
        assert!((median_heuristic_sigma(&mostly).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_witness() {
        let fm = one_d(0.0, 2.0, 0.0);
        let w = witness_direct(&[2.0], &fm, 1.0).unwrap();
        assert!((w.value - ((-4f64).exp() - 1.0)).abs() < 1e-15);
        assert!((w.value + 0.981_684_361_111_266).abs() < 1e-7);
        assert_eq!(witness_direct(&[1.0], &fm, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn factored_at_zero_matches_direct_at_test_row() {
        let fm = one_d(0.0, 2.0, 0.2);
        let g = fm.gram().unwrap();
        let a = witness_factored(&[0.0; 3], g, 1, 1, 1.0).unwrap();
        let b = witness_direct(&[0.2], &fm, 1.0).unwrap();
        assert!((a.value - b.value).abs() < 1e-15);
    }

    #[test]
    fn gradient_sign_on_line() {
        // At z = 1 (equidistant) the witness decreases toward the target at 2.
        // With V = [2, 0, 0.2] (target, source, test), r = (0.4, 0, 0) puts
        // z = 0.2 + 0.8 = 1.
        let fm = one_d(0.0, 2.0, 0.2);
        let g = fm.gram().unwrap();
        let grad = witness_grad_r(&[0.4, 0.0, 0.0], g, 1, 1, 1.0).unwrap();
        // df/dz at z=1: source term -2 z e^{-z²} = -2/e, target term -(-2 (z-2) e^{-(z-2)²}) = -2/e
        let dfdz = -4.0 * (-1f64).exp();
        assert!((grad[0] - 2.0 * dfdz).abs() < 1e-12);
        assert!(grad[0] < 0.0, "descent direction raises the target coefficient");
    }

    #[test]
    fn identical_blocks_vanish() {
        let fm = FeatureMatrix::from_sets(
            &[vec![1.0, 2.0], vec![0.0, -1.0]],
            &[vec![0.0, -1.0], vec![1.0, 2.0]],
            &[0.3, 0.4],
        )
        .unwrap()
        .with_gram()
        .unwrap();
        let g = fm.gram().unwrap();
        let r = [0.1, -0.3, 0.2, 0.05, 0.7];
        assert_eq!(witness_factored(&r, g, 2, 2, 1.3).unwrap().value, 0.0);
        assert_eq!(witness_direct(&[5.0, 1.0], &fm, 1.3).unwrap().value, 0.0);
        assert!(witness_grad_r(&r, g, 2, 2, 1.3).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn budget_examples() {
        let id = gram(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3, 3).unwrap();
        assert_eq!(budget(&[0.0; 3], &id).unwrap(), 0.0);
        assert_eq!(budget_grad(&[0.0; 3], &id).unwrap(), vec![0.0; 3]);
        assert_eq!(budget(&[3.0, 4.0, 0.0], &id).unwrap(), 25.0);
        assert_eq!(budget_grad(&[3.0, 4.0, 0.0], &id).unwrap(), vec![6.0, 8.0, 0.0]);
    }

    #[test]
    fn errors() {
        let fm = one_d(0.0, 2.0, 0.2);
        let g = fm.gram().unwrap();
        assert!(witness_factored(&[0.0; 2], g, 1, 1, 1.0).is_err());
        assert!(witness_factored(&[0.0; 3], g, 2, 0, 1.0).is_err());
        assert!(witness_direct(&[0.0, 1.0], &fm, 1.0).is_err());
        let no_gram = FeatureMatrix::from_sets(&[vec![1.0]], &[vec![0.0]], &[0.5]).unwrap();
        assert!(matches!(no_gram.require_gram(), Err(Error::Precondition(_))));
        assert!(FeatureMatrix::from_rows(vec![0.0; 5], 2, 1, 1).is_err());
    }
}
