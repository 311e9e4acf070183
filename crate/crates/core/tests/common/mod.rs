//! Shared helpers for the integration tests: random models and an
//! independent dense GP used as the reference for conditioned posteriors.

#![allow(dead_code)]

use std::sync::Arc;

use msbo::gp::{Dataset, GpModel, KernelHyperparams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Matérn 5/2 ARD covariance written out directly from its closed form.
pub fn matern52(a: &[f64], b: &[f64], lengthscales: &[f64], signal: f64) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let r = (5.0 * r2).sqrt();
    signal * (1.0 + r + 5.0 * r2 / 3.0) * (-r).exp()
}

/// Posterior mean and covariance of the latent function at `query` given
/// `(xs, ys)`, computed with a plain Cholesky solve.
pub fn dense_posterior(
    xs: &[Vec<f64>],
    ys: &[f64],
    hp: &KernelHyperparams,
    query: &[Vec<f64>],
) -> (DVector<f64>, DMatrix<f64>) {
    let k = |a: &[f64], b: &[f64]| matern52(a, b, &hp.lengthscales, hp.signal_variance);
    let n = xs.len();
    let mut kxx = DMatrix::from_fn(n, n, |i, j| k(&xs[i], &xs[j]));
    for i in 0..n {
        kxx[(i, i)] += hp.noise_variance;
    }
    let chol = kxx.cholesky().expect("oracle kernel matrix is positive definite");
    let kxq = DMatrix::from_fn(n, query.len(), |i, j| k(&xs[i], &query[j]));
    let kqq = DMatrix::from_fn(query.len(), query.len(), |i, j| k(&query[i], &query[j]));
    let resid = DVector::from_iterator(n, ys.iter().map(|y| y - hp.mean_constant));
    let alpha = chol.solve(&resid);
    let mean = kxq.tr_mul(&alpha).add_scalar(hp.mean_constant);
    let v = chol.solve(&kxq);
    let cov = kqq - kxq.tr_mul(&v);
    (mean, cov)
}

pub fn uniform_points<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Random smooth outcomes: a sum of a few random cosines.
pub fn smooth_outcomes<R: Rng>(rng: &mut R, xs: &[Vec<f64>]) -> Vec<f64> {
    let d = xs.first().map_or(0, Vec::len);
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..3)
        .map(|_| {
            let freq = (0..d).map(|_| rng.random_range(-8.0..8.0)).collect();
            (freq, rng.random_range(0.0..6.3), rng.random_range(0.3..1.0))
        })
        .collect();
    xs.iter()
        .map(|x| {
            terms
                .iter()
                .map(|(f, phase, amp)| amp * (x.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() + phase).cos())
                .sum()
        })
        .collect()
}

pub struct RandomModel {
    pub model: Arc<GpModel>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub hp: KernelHyperparams,
}

/// Exact-root model with random data and hyperparameters in moderate ranges.
pub fn random_model<R: Rng>(rng: &mut R, n: usize, d: usize, noise: (f64, f64)) -> RandomModel {
    let xs = uniform_points(rng, n, d);
    let ys = smooth_outcomes(rng, &xs);
    let hp = KernelHyperparams::new(
        (0..d).map(|_| rng.random_range(0.15..0.6)).collect(),
        rng.random_range(0.5..2.0),
        rng.random_range(noise.0..noise.1),
        rng.random_range(-0.5..0.5),
    )
    .expect("valid hyperparameters");
    let data = Dataset::from_rows(&xs, &ys).expect("consistent data");
    let model = Arc::new(GpModel::new(data, hp.clone()).expect("model builds"));
    RandomModel { model, xs, ys, hp }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
