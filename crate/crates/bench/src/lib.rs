//! Shared inputs for the benchmarks.

use higsfa::datasets::stream_rng;
use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

/// Gaussian data with a slowly drifting first coordinate.
pub fn drifting_data(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, 0);
    let mut x = Array2::<f64>::zeros((n, dim));
    for i in 0..n {
        for j in 0..dim {
            let v: f64 = StandardNormal.sample(&mut rng);
            x[[i, j]] = v;
        }
        x[[i, 0]] += (i as f64 / n as f64 * 6.0).sin() * 3.0;
    }
    x
}

/// Evenly spaced labels, one per sample.
pub fn ramp_labels(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}
