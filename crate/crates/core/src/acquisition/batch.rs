//! Monte Carlo batch improvement (q-EI) and the batch-then-sample selector.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::base::BaseFeatures;
use super::{ei_analytic, DEFAULT_MC_SAMPLES, VARIANCE_FLOOR};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::optim::{optimize_box, random_inits, Objective, OptimizerConfig};
use crate::quadrature::{correlate, normal_matrix};

/// `(1/m) Σ_i (max_j y_ij − b)⁺` over the rows of `samples`.
pub fn batch_improvement_mc(samples: &DMatrix<f64>, incumbent: f64) -> f64 {
    let m = samples.nrows();
    if m == 0 {
        return 0.0;
    }
    let w = vec![1.0 / m as f64; m];
    batch_improvement_weighted(samples, &w, incumbent)
}

/// `Σ_i w_i (max_j y_ij − b)⁺`.
pub fn batch_improvement_weighted(samples: &DMatrix<f64>, weights: &[f64], incumbent: f64) -> f64 {
    samples
        .row_iter()
        .zip(weights)
        .map(|(row, w)| w * (row.max() - incumbent).max(0.0))
        .sum()
}

/// Cholesky factor of a small covariance on the tape (`None` marks a
/// structural zero). Pivots at or below `1e-12 · max diag` give an all-zero
/// column, as in [`psd_root`](crate::linalg::psd_root), so duplicated points
/// yield identical samples.
pub(crate) fn tape_psd_cholesky<'t>(cov: &[Vec<Var<'t>>]) -> Vec<Vec<Option<Var<'t>>>> {
    let q = cov.len();
    let scale = (0..q).fold(0.0_f64, |a, i| a.max(cov[i][i].value().abs()));
    let tiny = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l: Vec<Vec<Option<Var>>> = vec![vec![None; q]; q];
    for j in 0..q {
        let mut dj = cov[j][j];
        for k in 0..j {
            if let Some(v) = l[j][k] {
                dj = dj - v.square();
            }
        }
        if dj.value() <= tiny {
            continue;
        }
        let root = dj.sqrt();
        l[j][j] = Some(root);
        for i in (j + 1)..q {
            let mut s = cov[i][j];
            for k in 0..j {
                if let (Some(a), Some(b)) = (l[i][k], l[j][k]) {
                    s = s - a * b;
                }
            }
            l[i][j] = Some(s / root);
        }
    }
    l
}

/// Monte Carlo batch improvement on the tape for samples `mean + L z_r`.
pub(crate) fn tape_batch_improvement<'t>(
    mean: &[Var<'t>],
    l: &[Vec<Option<Var<'t>>>],
    z: &DMatrix<f64>,
    incumbent: Var<'t>,
    zero: Var<'t>,
) -> Var<'t> {
    let q = mean.len();
    let n = z.nrows();
    let mut total = zero;
    for r in 0..n {
        let mut best: Option<Var> = None;
        for j in 0..q {
            let mut y = mean[j];
            for k in 0..=j {
                if let Some(v) = l[j][k] {
                    y = y + v * z[(r, k)];
                }
            }
            best = Some(match best {
                None => y,
                Some(b) => b.max(y),
            });
        }
        let imp = (best.expect("q ≥ 1") - incumbent).max_const(0.0);
        total = total + imp;
    }
    total * (1.0 / n as f64)
}

/// q-EI of a batch of points under the latent posterior, with fixed base
/// samples.
#[derive(Debug, Clone)]
pub struct QeiObjective {
    pub model: Arc<GpModel>,
    pub q: usize,
    pub base_samples: DMatrix<f64>,
    pub incumbent: f64,
}

impl QeiObjective {
    pub fn new(model: Arc<GpModel>, q: usize, incumbent: f64, seed: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidArgument("batch size must be ≥ 1".into()));
        }
        Ok(Self {
            model,
            q,
            base_samples: normal_matrix(DEFAULT_MC_SAMPLES, q, seed),
            incumbent,
        })
    }

    fn points(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = self.model.dim();
        if x.len() != d * self.q {
            return Err(Error::DimensionMismatch {
                expected: d * self.q,
                got: x.len(),
            });
        }
        Ok(x.chunks(d).map(<[f64]>::to_vec).collect())
    }

    /// Value through the plain posterior and `correlate`.
    pub fn value_direct(&self, x: &[f64]) -> Result<f64> {
        let pts = self.points(x)?;
        let post = self.model.posterior_rows(&pts);
        let samples = correlate(&post, &self.base_samples)?;
        Ok(batch_improvement_mc(&samples, self.incumbent))
    }

    fn tape_eval(&self, x: &[f64], with_gradient: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let pts = self.points(x)?;
        let q = self.q;
        let mut pairs = Vec::with_capacity(q * (q + 1) / 2);
        for i in 0..q {
            for j in 0..=i {
                pairs.push((i, j));
            }
        }
        let base = BaseFeatures::new(&self.model, pts, pairs);
        let tape = Tape::new();
        let zero = tape.var(0.0);
        let mu: Vec<Var> = base.mu0.iter().map(|&v| tape.var(v)).collect();
        let c0: Vec<Var> = base.c0.iter().map(|&v| tape.var(v)).collect();
        let mut cov = vec![vec![zero; q]; q];
        let mut idx = 0;
        for i in 0..q {
            for j in 0..=i {
                cov[i][j] = c0[idx];
                cov[j][i] = c0[idx];
                idx += 1;
            }
        }
        let l = tape_psd_cholesky(&cov);
        let inc = tape.var(self.incumbent);
        let out = tape_batch_improvement(&mu, &l, &self.base_samples, inc, zero);
        let value = out.value();
        if !value.is_finite() {
            return Err(Error::NonFinite("q-EI".into()));
        }
        if !with_gradient {
            return Ok((value, None));
        }
        let adj = tape.gradient(out);
        let mu_bar: Vec<f64> = mu.iter().map(|v| adj.wrt(*v)).collect();
        let c0_bar: Vec<f64> = c0.iter().map(|v| adj.wrt(*v)).collect();
        Ok((value, Some(base.backprop(&self.model, &mu_bar, &c0_bar).concat())))
    }
}

impl Objective for QeiObjective {
    fn num_variables(&self) -> usize {
        self.q * self.model.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.tape_eval(x, false)?.0)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.tape_eval(x, true)?;
        Ok((v, g.expect("gradient requested")))
    }
}

/// Normalized selection probabilities; uniform when every weight is zero.
pub fn selection_probabilities(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    if total > 0.0 && total.is_finite() {
        weights.iter().map(|w| w.max(0.0) / total).collect()
    } else {
        vec![1.0 / weights.len() as f64; weights.len()]
    }
}

/// Outcome of [`binoculars_select`].
#[derive(Debug, Clone)]
pub struct BinocularsChoice {
    pub point: Vec<f64>,
    pub batch: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub index: usize,
    pub batch_value: f64,
}

/// Maximizes q-EI over a batch of `q` points, then draws one member with
/// probability proportional to its own expected improvement.
pub fn binoculars_select(
    model: &Arc<GpModel>,
    incumbent: f64,
    q: usize,
    seed: u64,
    cfg: &OptimizerConfig,
) -> Result<BinocularsChoice> {
    let obj = QeiObjective::new(model.clone(), q, incumbent, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b1c0);
    let inits = random_inits(&obj, cfg.restarts.max(1), cfg.raw_samples, &mut rng)?;
    let sol = optimize_box(&obj, &inits, cfg)?;
    let d = model.dim();
    let batch: Vec<Vec<f64>> = sol.x.chunks(d).map(<[f64]>::to_vec).collect();
    let eis: Vec<f64> = batch
        .iter()
        .map(|p| {
            let post = model.posterior_rows(std::slice::from_ref(p));
            ei_analytic(post.mean[0], post.covariance[(0, 0)].max(VARIANCE_FLOOR).sqrt(), incumbent)
        })
        .collect();
    let probabilities = selection_probabilities(&eis);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut index = probabilities.len() - 1;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            index = i;
            break;
        }
    }
    Ok(BinocularsChoice {
        point: batch[index].clone(),
        batch,
        probabilities,
        index,
        batch_value: sol.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_basics() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.5, 0.2]);
        assert_eq!(batch_improvement_mc(&s, 1.0), 0.0);
        assert_eq!(batch_improvement_mc(&DMatrix::from_element(1, 1, 3.0), 1.0), 2.0);
        assert!((batch_improvement_mc(&s, 0.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mc_matches_analytic_ei() {
        let (mu, sd, b) = (0.3, 1.7, 0.8);
        let z = normal_matrix(100_000, 1, 17);
        let samples = z.map(|v| mu + sd * v);
        let mc = batch_improvement_mc(&samples, b);
        let exact = ei_analytic(mu, sd, b);
        assert!((mc - exact).abs() / exact < 0.01);
    }

    #[test]
    fn probabilities_normalize() {
        let p = selection_probabilities(&[0.3, 0.1, 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15 && p[2] == 0.0);
        assert_eq!(selection_probabilities(&[0.0, 0.0]), vec![0.5, 0.5]);
    }
}
