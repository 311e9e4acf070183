//! Dense factorization helpers shared by the surrogate and the fantasy caches.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of the first jitter added to a failing decomposition.
pub const JITTER_FLOOR: f64 = 1e-6;
/// Number of ×10 jitter escalations after the first jittered attempt.
pub const JITTER_ESCALATIONS: usize = 3;

/// Lower-triangular factor together with the diagonal jitter that was needed.
#[derive(Debug, Clone)]
pub struct JitteredFactor {
    pub lower: DMatrix<f64>,
    pub jitter: f64,
}

/// Cholesky factor of a symmetric matrix, adding `1e-6 * mean(diag)` and up
/// to three further ×10 escalations to the diagonal when the plain
/// factorization fails.
pub fn jittered_cholesky(m: &DMatrix<f64>) -> Result<JitteredFactor> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "cannot decompose a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix to decompose".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(JitteredFactor {
            lower: DMatrix::zeros(0, 0),
            jitter: 0.0,
        });
    }
    if let Some(c) = m.clone().cholesky() {
        return Ok(JitteredFactor {
            lower: c.unpack(),
            jitter: 0.0,
        });
    }
    let mean_diag = m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let base = JITTER_FLOOR * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut jitter = base;
    for _ in 0..=JITTER_ESCALATIONS {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = shifted.cholesky() {
            return Ok(JitteredFactor {
                lower: c.unpack(),
                jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(Error::Decomposition(format!(
        "matrix of size {n} is not positive definite after jitter {:.3e}",
        jitter / 10.0
    )))
}

/// Root decomposition `R` with `R Rᵀ = m` (exact lower-triangular root).
pub fn root_decompose(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(jittered_cholesky(m)?.lower)
}

/// Cholesky-style root of a positive semidefinite matrix.
///
/// Pivots that fall below `1e-12 * max(diag)` are treated as exact zeros and
/// their column is dropped, so duplicated rows produce identical root rows.
/// Negative pivots beyond `1e-8 * max(diag)` are reported as an error.
pub fn psd_root(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::Shape("psd_root needs a square matrix".into()));
    }
    let scale = m.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let tiny = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -1e-8 * scale.max(1e-300) {
            return Err(Error::Decomposition(format!(
                "covariance is indefinite (pivot {d:.3e} at {j})"
            )));
        }
        if d <= tiny {
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix with non-zero diagonal.
pub fn lower_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Decomposition("singular triangular factor".into()))
}

/// Rank-limited pivoted Cholesky: returns `R` (n×rank) with `R Rᵀ ≈ m`,
/// rows in the original ordering.
pub fn pivoted_cholesky(m: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let rank = rank.min(n);
    let mut diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut r = DMatrix::<f64>::zeros(n, rank);
    for k in 0..rank {
        // pick largest remaining diagonal
        let (best, _) = (k..n)
            .map(|i| (i, diag[perm[i]]))
            .fold((k, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        perm.swap(k, best);
        let p = perm[k];
        let pivot = diag[p];
        if pivot <= 0.0 {
            return Err(Error::Decomposition(format!(
                "pivoted Cholesky ran out of positive pivots at rank {k}"
            )));
        }
        let root = pivot.sqrt();
        r[(p, k)] = root;
        for &i in &perm[(k + 1)..] {
            let mut s = m[(i, p)];
            for j in 0..k {
                s -= r[(i, j)] * r[(p, j)];
            }
            let v = s / root;
            r[(i, k)] = v;
            diag[i] -= v * v;
        }
    }
    Ok(r)
}

/// Pseudoinverse of a root factor.
///
/// Square lower-triangular roots are inverted directly; rectangular (rank
/// reduced) roots use `(RᵀR)⁻¹Rᵀ`.
pub fn root_pseudo_inverse(root: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, r) = root.shape();
    if n == r && is_lower_triangular(root) {
        return lower_inverse(root);
    }
    let gram = root.transpose() * root;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Decomposition("root has dependent columns".into()))?;
    Ok(chol.solve(&root.transpose()))
}

fn is_lower_triangular(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| ((i + 1)..n).all(|j| m[(i, j)] == 0.0))
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

/// Largest absolute entry of a vector.
pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}
