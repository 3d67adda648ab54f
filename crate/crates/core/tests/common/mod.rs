//! Reference implementations written directly from the definitions, shared
//! by the integration tests.

#![allow(dead_code)]

use higsfa::datasets::stream_rng;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn randn(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, 99);
    Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng))
}

/// Random mixture of slow sinusoids and white noise, so that slowness has
/// a clear ordering.
pub fn smooth_mixture(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, 98);
    let mut src = Array2::<f64>::zeros((n, d));
    for j in 0..d {
        let freq = 1.0 + j as f64 * 1.7;
        let phase: f64 = rng.random::<f64>() * 6.0;
        for i in 0..n {
            let t = i as f64 / n as f64;
            let noise: f64 = StandardNormal.sample(&mut rng);
            src[[i, j]] = if j % 2 == 0 {
                (std::f64::consts::TAU * freq * t + phase).sin() + 0.05 * noise
            } else {
                noise
            };
        }
    }
    // diagonally dominant, so the mixture stays well conditioned
    let mix = Array2::from_shape_fn((d, d), |(i, j)| {
        rng.random::<f64>() * 2.0 - 1.0 + if i == j { d as f64 } else { 0.0 }
    });
    src.dot(&mix)
}

fn to_na(a: &ArrayView2<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Plain SFA on a time series: unit-variance, decorrelated outputs that
/// minimize the mean squared temporal difference. Solved through a
/// Cholesky factor of the covariance rather than an eigen-whitening.
pub fn sfa_oracle(x: &ArrayView2<f64>, j: usize) -> Array2<f64> {
    let n = x.nrows();
    let mean = x.mean_axis(Axis(0)).unwrap();
    let xc = x - &mean;
    let cov = xc.t().dot(&xc) / n as f64;
    let dx = &xc.slice(ndarray::s![1.., ..]) - &xc.slice(ndarray::s![..-1, ..]);
    let dcov = dx.t().dot(&dx) / (n - 1) as f64;
    let l = nalgebra::Cholesky::new(to_na(&cov.view())).expect("covariance is positive definite");
    let linv = l.l().try_inverse().unwrap();
    let a = &linv * to_na(&dcov.view()) * linv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let w = linv.transpose() * eig.eigenvectors;
    let xc_na = to_na(&xc.view());
    let y = xc_na * w;
    Array2::from_shape_fn((n, j), |(r, c)| y[(r, order[c])])
}

/// Moments of `x` under vertex weights `v` and ordered-pair edge weights
/// given by `gamma(n, n')`, by plain double loops.
pub fn naive_moments(
    x: &ArrayView2<f64>,
    v: &[f64],
    gamma: impl Fn(usize, usize) -> f64,
) -> (Array1<f64>, Array2<f64>, Array2<f64>) {
    let (n, d) = x.dim();
    let q: f64 = v.iter().sum();
    let mut mean = Array1::<f64>::zeros(d);
    for i in 0..n {
        mean.scaled_add(v[i] / q, &x.row(i));
    }
    let mut cov = Array2::<f64>::zeros((d, d));
    for i in 0..n {
        let c = &x.row(i) - &mean;
        for a in 0..d {
            for b in 0..d {
                cov[[a, b]] += v[i] * c[a] * c[b] / q;
            }
        }
    }
    let mut r = 0.0;
    let mut diff = Array2::<f64>::zeros((d, d));
    for i in 0..n {
        for k in 0..n {
            if i == k {
                continue;
            }
            let w = gamma(i, k);
            if w == 0.0 {
                continue;
            }
            r += w;
            let dv = &x.row(k) - &x.row(i);
            for a in 0..d {
                for b in 0..d {
                    diff[[a, b]] += w * dv[a] * dv[b];
                }
            }
        }
    }
    (mean, cov, diff / r)
}

/// Group index of every sample for `n_groups` equal contiguous groups in
/// label order, the remainder going to the earliest groups.
pub fn serial_groups(labels: &[f64], n_groups: usize) -> Vec<usize> {
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]));
    let mut group = vec![0; n];
    let (base, rem) = (n / n_groups, n % n_groups);
    let mut pos = 0;
    for g in 0..n_groups {
        let size = base + usize::from(g < rem);
        for &i in &order[pos..pos + size] {
            group[i] = g;
        }
        pos += size;
    }
    group
}

pub fn max_abs_diff(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Maximum entrywise difference after flipping each column of `b` to best
/// match the sign of the same column of `a`.
pub fn sign_aligned_max_diff(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let mut worst = 0.0_f64;
    for (ca, cb) in a.columns().into_iter().zip(b.columns()) {
        let dot: f64 = ca.dot(&cb);
        let s = if dot < 0.0 { -1.0 } else { 1.0 };
        for (x, y) in ca.iter().zip(cb) {
            worst = worst.max((x - s * y).abs());
        }
    }
    worst
}

/// Relative residual of projecting every column of `target` onto the span
/// of the columns of `basis` plus a constant.
pub fn span_residual(target: &ArrayView2<f64>, basis: &ArrayView2<f64>) -> f64 {
    let n = basis.nrows();
    let mut b = Array2::<f64>::ones((n, basis.ncols() + 1));
    b.slice_mut(ndarray::s![.., 1..]).assign(basis);
    let bn = to_na(&b.view());
    let tn = to_na(target);
    let svd = bn.clone().svd(true, true);
    let coef = svd.solve(&tn, 1e-12).unwrap();
    let res = &tn - &bn * coef;
    res.norm() / tn.norm()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
