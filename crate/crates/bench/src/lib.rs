//! Seeded fixtures shared by the benches.

use dmt_core::rng::seeded;
use dmt_core::{FeatureMatrix, ImageTensor};
use rand::Rng;

/// Random features with `m` sources, `n` targets and the Gram section.
pub fn features(m: usize, n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = seeded(seed);
    let rows = (0..(m + n + 1) * d).map(|_| rng.gen_range(0.0..1.0)).collect();
    FeatureMatrix::from_rows(rows, d, m, n)
        .and_then(FeatureMatrix::with_gram)
        .expect("valid fixture")
}

/// Uniform noise image.
pub fn image(h: usize, w: usize, c: usize, seed: u64) -> ImageTensor {
    let mut rng = seeded(seed);
    let px = (0..h * w * c).map(|_| rng.gen()).collect();
    ImageTensor::new(h, w, c, px).expect("valid fixture")
}

/// Small coefficient vector of length `k`.
pub fn coefficients(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..k).map(|_| rng.gen_range(-0.05..0.05)).collect()
}
