//! Matérn 5/2 kernel with automatic relevance determination.

use nalgebra::DMatrix;

use super::KernelHyperparams;
use crate::error::{Error, Result};

const SQRT5: f64 = 2.23606797749979;

/// Scaled distance `r = ‖(x1 − x2) / ℓ‖`.
#[inline]
fn scaled_distance_sq(x1: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    x1.iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum()
}

/// `σ² (1 + √5 r + 5r²/3) exp(−√5 r)`.
#[inline]
pub(crate) fn matern52(x1: &[f64], x2: &[f64], lengthscales: &[f64], signal: f64) -> f64 {
    let r2 = scaled_distance_sq(x1, x2, lengthscales);
    let r = r2.sqrt();
    signal * (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * (-SQRT5 * r).exp()
}

/// Common factor `(5/3) σ² (1 + √5 r) exp(−√5 r)` of the derivatives.
#[inline]
fn derivative_factor(r: f64, signal: f64) -> f64 {
    5.0 / 3.0 * signal * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
}

/// Gradient of `k(x1, x2)` with respect to `x2`, accumulated into `out`
/// scaled by `weight`.
#[inline]
pub(crate) fn matern52_grad_second(
    x1: &[f64],
    x2: &[f64],
    lengthscales: &[f64],
    signal: f64,
    weight: f64,
    out: &mut [f64],
) {
    let r = scaled_distance_sq(x1, x2, lengthscales).sqrt();
    let f = weight * derivative_factor(r, signal);
    for i in 0..out.len() {
        out[i] -= f * (x2[i] - x1[i]) / (lengthscales[i] * lengthscales[i]);
    }
}

/// Derivative of `k(x1, x2)` with respect to `log ℓ_i`, for every `i`.
pub(crate) fn matern52_grad_log_lengthscales(
    x1: &[f64],
    x2: &[f64],
    lengthscales: &[f64],
    signal: f64,
    out: &mut [f64],
) {
    let r = scaled_distance_sq(x1, x2, lengthscales).sqrt();
    let f = derivative_factor(r, signal);
    for i in 0..out.len() {
        let d = (x1[i] - x2[i]) / lengthscales[i];
        out[i] = f * d * d;
    }
}

/// Kernel value between two points, with argument validation.
pub fn kernel_eval(x1: &[f64], x2: &[f64], hp: &KernelHyperparams) -> Result<f64> {
    let d = hp.lengthscales.len();
    for x in [x1, x2] {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    hp.validate()?;
    Ok(matern52(x1, x2, &hp.lengthscales, hp.signal_variance))
}

/// Rows of `m` copied into contiguous buffers.
pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Cross-covariance matrix `K(a, b)` between the rows of `a` and `b`.
pub fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, hp: &KernelHyperparams) -> DMatrix<f64> {
    let ra = rows(a);
    let rb = rows(b);
    kernel_matrix_rows(&ra, &rb, hp)
}

pub(crate) fn kernel_matrix_rows(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    hp: &KernelHyperparams,
) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        matern52(&a[i], &b[j], &hp.lengthscales, hp.signal_variance)
    })
}
