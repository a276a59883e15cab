//! Seeded generators for self-checks and demos.

use inertia_core::capability::{MeasurementSet, Sample};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Points filling a tilted ellipse in the `(ω, ω̇)` plane, sampled every
/// 0.1 s. The cloud is deliberately anisotropic: ω spans about ±0.2 Hz and
/// ω̇ about ±0.5 Hz/s.
pub fn elliptical_cloud(n: usize, seed: u64) -> MeasurementSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tilt: f64 = 0.3;
    let samples = (0..n)
        .map(|k| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let r = rng.random_range(0.0f64..1.0).sqrt();
            let (a, b) = (0.2 * r * theta.cos(), 0.5 * r * theta.sin());
            Sample {
                time_s: 0.1 * k as f64,
                freq_dev_hz: a * tilt.cos() - b * tilt.sin() / 10.0,
                rocof_hz_s: a * tilt.sin() * 10.0 + b * tilt.cos(),
            }
        })
        .collect();
    MeasurementSet { samples, rocof_derived: false }
}

/// Random stable `(A, B, C)` with `n` states: a random matrix shifted left
/// past its Gershgorin discs, so every eigenvalue has real part ≤ -0.05.
pub fn stable_system(n: usize, inputs: usize, outputs: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let radius = (0..n).map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    for i in 0..n {
        a[(i, i)] -= radius + 0.05;
    }
    let b = DMatrix::from_fn(n, inputs, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(outputs, n, |_, _| rng.random_range(-1.0..1.0));
    (a, b, c)
}
