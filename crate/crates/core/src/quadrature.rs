//! Base samples for the lookahead tree and the reparameterized sampling map.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::Posterior;
use crate::linalg;

/// Largest Gauss–Hermite rule we are willing to build.
pub const MAX_GH_NODES: usize = 64;

/// Gauss–Hermite rule for the standard normal density:
/// `∫ g(z) φ(z) dz ≈ Σ w_i g(z_i)`, nodes sorted ascending.
pub fn gauss_hermite_rule(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::InvalidArgument("quadrature rule needs m ≥ 1".into()));
    }
    if m > MAX_GH_NODES {
        return Err(Error::InvalidArgument(format!(
            "Gauss-Hermite rules above {MAX_GH_NODES} nodes are not supported (got {m})"
        )));
    }
    if m == 1 {
        return Ok((vec![0.0], vec![1.0]));
    }
    // Golub–Welsch: eigenvalues of the Jacobi matrix of the probabilists'
    // Hermite recurrence, then Newton polishing on the orthonormal recurrence.
    let jac = DMatrix::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = vec![0.0; m];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        for _ in 0..4 {
            let (p, dp, _) = orthonormal_hermite(*x, m);
            if dp == 0.0 {
                break;
            }
            *x -= p / dp;
        }
        *w = 1.0 / orthonormal_hermite(*x, m).2;
    }
    // enforce exact symmetry
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let a = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -a;
        nodes[j] = a;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

/// Returns `(p_m(x), p_m'(x), Σ_{j<m} p_j(x)²)` for the orthonormal
/// probabilists' Hermite polynomials `p_j = He_j / √(j!)`.
fn orthonormal_hermite(x: f64, m: usize) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut christoffel = 0.0;
    for n in 0..m {
        christoffel += cur * cur;
        let next = (x * cur - (n as f64).sqrt() * prev) / ((n + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, (m as f64).sqrt() * prev, christoffel)
}

/// How base samples are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleMode {
    /// Gauss–Hermite nodes with their weights.
    #[default]
    GaussHermite,
    /// Seeded standard-normal draws with uniform weights.
    MonteCarlo,
}

/// Scalar base samples for one level of the tree, shared by every parent
/// branch at that level.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLevel {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SampleLevel {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Base samples for every fantasy level of a lookahead tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSampleTree {
    pub mode: SampleMode,
    pub levels: Vec<SampleLevel>,
    pub seed: u64,
}

impl BaseSampleTree {
    /// One level per entry of `counts`. Gauss–Hermite mode ignores `seed`.
    pub fn draw(counts: &[usize], mode: SampleMode, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut levels = Vec::with_capacity(counts.len());
        for &m in counts {
            if m == 0 {
                return Err(Error::InvalidArgument("fantasy count must be ≥ 1".into()));
            }
            let level = match mode {
                SampleMode::GaussHermite => {
                    let (nodes, weights) = gauss_hermite_rule(m)?;
                    SampleLevel { nodes, weights }
                }
                SampleMode::MonteCarlo => SampleLevel {
                    nodes: (0..m).map(|_| StandardNormal.sample(&mut rng)).collect(),
                    weights: vec![1.0 / m as f64; m],
                },
            };
            levels.push(level);
        }
        Ok(Self { mode, levels, seed })
    }

    pub fn counts(&self) -> Vec<usize> {
        self.levels.iter().map(SampleLevel::len).collect()
    }
}

/// `count × q` matrix of seeded standard-normal draws.
pub fn normal_matrix(count: usize, q: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(count, q, |_, _| StandardNormal.sample(&mut rng))
}

/// Root `L` of the posterior covariance (`L Lᵀ = Σ`), tolerating exact
/// rank deficiency and falling back to jitter otherwise.
pub fn covariance_root(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match linalg::psd_root(cov) {
        Ok(l) => Ok(l),
        Err(_) => linalg::root_decompose(cov),
    }
}

/// Maps base samples to posterior samples: row `i` is `μ + L z_i`.
pub fn correlate(post: &Posterior, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = post.len();
    if z.ncols() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: z.ncols(),
        });
    }
    let l = covariance_root(&post.covariance)?;
    let mut out = z * l.transpose();
    for mut row in out.row_iter_mut() {
        for j in 0..q {
            row[j] += post.mean[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn small_rules_closed_form() {
        let (x, w) = gauss_hermite_rule(1).unwrap();
        assert_eq!((x, w), (vec![0.0], vec![1.0]));
        let (x, w) = gauss_hermite_rule(2).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
    }

    /// The three-node rule is the unique symmetric rule matching the normal
    /// moments 1, 0, 1, 0, 3, 0.
    #[test]
    fn three_node_rule_by_moments() {
        let (x, w) = gauss_hermite_rule(3).unwrap();
        let s3 = 3f64.sqrt();
        let expect_x = [-s3, 0.0, s3];
        let expect_w = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
        for i in 0..3 {
            assert!((x[i] - expect_x[i]).abs() < 1e-13);
            assert!((w[i] - expect_w[i]).abs() < 1e-13);
        }
    }

    fn normal_moment(k: u32) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            (1..k).step_by(2).map(|v| v as f64).product()
        }
    }

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for m in [4usize, 7, 10, 16, 30] {
            let (x, w) = gauss_hermite_rule(m).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|v| *v > 0.0));
            for k in 0..(2 * m as u32).min(24) {
                let approx: f64 = x.iter().zip(&w).map(|(z, wi)| wi * z.powi(k as i32)).sum();
                let scale: f64 = x.iter().zip(&w).map(|(z, wi)| (wi * z.powi(k as i32)).abs()).sum();
                let exact = normal_moment(k);
                // odd moments cancel between terms of size `scale`
                assert!(
                    (approx - exact).abs() < 1e-10 * scale.max(1.0),
                    "m={m} k={k}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn largest_rule_is_stable_and_bigger_rejected() {
        let (x, w) = gauss_hermite_rule(64).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!(gauss_hermite_rule(65).is_err());
        assert!(gauss_hermite_rule(0).is_err());
    }

    #[test]
    fn draws_follow_mode_contract() {
        let gh = BaseSampleTree::draw(&[1, 5], SampleMode::GaussHermite, 3).unwrap();
        assert_eq!(gh.levels[0].nodes, vec![0.0]);
        assert_eq!(gh, BaseSampleTree::draw(&[1, 5], SampleMode::GaussHermite, 99).unwrap().with_seed(3));
        let a = BaseSampleTree::draw(&[10, 5], SampleMode::MonteCarlo, 7).unwrap();
        let b = BaseSampleTree::draw(&[10, 5], SampleMode::MonteCarlo, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, BaseSampleTree::draw(&[10, 5], SampleMode::MonteCarlo, 8).unwrap());
    }

    impl BaseSampleTree {
        fn with_seed(mut self, seed: u64) -> Self {
            self.seed = seed;
            self
        }
    }

    #[test]
    fn correlate_affine_map() {
        let post = Posterior {
            mean: DVector::from_element(1, 2.0),
            covariance: DMatrix::from_element(1, 1, 4.0),
        };
        let out = correlate(&post, &DMatrix::from_element(1, 1, 1.5)).unwrap();
        assert!((out[(0, 0)] - 5.0).abs() < 1e-15);
        let zero = correlate(&post, &DMatrix::zeros(3, 1)).unwrap();
        assert!(zero.iter().all(|v| *v == 2.0));
    }

    #[test]
    fn correlate_reproduces_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.5, -0.6, -0.6, 0.8]);
        let post = Posterior {
            mean: DVector::from_vec(vec![0.3, -1.0]),
            covariance: cov.clone(),
        };
        let n = 100_000;
        let s = correlate(&post, &normal_matrix(n, 2, 5)).unwrap();
        let mean = s.row_mean();
        let mut emp = DMatrix::zeros(2, 2);
        for row in s.row_iter() {
            let c = row - &mean;
            emp += c.transpose() * c;
        }
        emp /= n as f64;
        let rel = (&emp - &cov).norm() / cov.norm();
        assert!(rel < 0.05, "relative error {rel}");
        for j in 0..2 {
            let se = (cov[(j, j)] / n as f64).sqrt();
            assert!((mean[j] - post.mean[j]).abs() < 5.0 * se);
        }
    }
}
