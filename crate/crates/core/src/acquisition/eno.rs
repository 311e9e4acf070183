//! Non-adaptive lookahead: after the first fantasy, the remaining `k − 1`
//! steps are valued as one jointly chosen batch per first-stage branch.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::base::BaseFeatures;
use super::batch::{batch_improvement_mc, tape_batch_improvement, tape_psd_cholesky};
use super::{ei_analytic, AcquisitionValue, DEFAULT_MC_SAMPLES, VARIANCE_FLOOR};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::fantasy::FantasyModel;
use crate::gp::GpModel;
use crate::optim::Objective;
use crate::quadrature::{correlate, gauss_hermite_rule, normal_matrix, SampleLevel};

/// `EI(x) + Σ_i w_i · qEI(batch_i | 𝒟 ∪ {(x, y_i)})` with `y_i` the
/// first-stage fantasies and q-EI estimated from the base samples `mc`.
pub fn eno_objective(
    model: &Arc<GpModel>,
    x: &[f64],
    batches: &[DMatrix<f64>],
    level: &SampleLevel,
    mc: &DMatrix<f64>,
    incumbent: f64,
) -> Result<AcquisitionValue> {
    let d = model.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if batches.len() != level.len() {
        return Err(Error::Shape(format!(
            "{} batches for {} first-stage fantasies",
            batches.len(),
            level.len()
        )));
    }
    let q = mc.ncols();
    if batches.iter().any(|b| b.nrows() != q || b.ncols() != d) {
        return Err(Error::Shape(format!("every batch must be {q}x{d}")));
    }
    let post = model.posterior_rows(&[x.to_vec()]);
    let (mean, var) = (post.mean[0], post.covariance[(0, 0)]);
    let first = ei_analytic(mean, var.max(VARIANCE_FLOOR).sqrt(), incumbent);
    let s = (var + model.noise_variance()).max(VARIANCE_FLOOR).sqrt();
    let outcomes = DMatrix::from_fn(level.len(), 1, |i, _| mean + s * level.nodes[i]);
    let loc = DMatrix::from_row_slice(1, d, x);
    let fantasy = FantasyModel::fantasize(model.clone(), &[loc], &outcomes)?;
    let mut second = 0.0;
    for (i, batch) in batches.iter().enumerate() {
        let p = fantasy.posterior(i, batch)?;
        let samples = correlate(&p, mc)?;
        second += level.weights[i] * batch_improvement_mc(&samples, incumbent.max(outcomes[(i, 0)]));
    }
    Ok(AcquisitionValue::from_stages(vec![first, second]))
}

/// ENO objective over `x` followed by `m` batches of `k − 1` points.
#[derive(Debug, Clone)]
pub struct EnoObjective {
    pub model: Arc<GpModel>,
    pub horizon: usize,
    pub level: SampleLevel,
    pub mc: DMatrix<f64>,
    pub incumbent: f64,
}

impl EnoObjective {
    /// Gauss–Hermite first stage with `fantasies` nodes and
    /// [`DEFAULT_MC_SAMPLES`] seeded draws for the batch values.
    pub fn new(model: Arc<GpModel>, horizon: usize, fantasies: usize, incumbent: f64, seed: u64) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidArgument("ENO needs a horizon of at least 2".into()));
        }
        let (nodes, weights) = gauss_hermite_rule(fantasies)?;
        Ok(Self {
            model,
            horizon,
            level: SampleLevel { nodes, weights },
            mc: normal_matrix(DEFAULT_MC_SAMPLES, horizon - 1, seed),
            incumbent,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.horizon - 1
    }

    /// Splits flat variables into `x` and the per-fantasy batches.
    pub fn unpack(&self, flat: &[f64]) -> Result<(Vec<f64>, Vec<DMatrix<f64>>)> {
        let d = self.model.dim();
        if flat.len() != self.num_variables() {
            return Err(Error::DimensionMismatch {
                expected: self.num_variables(),
                got: flat.len(),
            });
        }
        let q = self.batch_size();
        let x = flat[..d].to_vec();
        let batches = flat[d..]
            .chunks(q * d)
            .map(|c| DMatrix::from_row_slice(q, d, c))
            .collect();
        Ok((x, batches))
    }

    pub fn evaluate(&self, flat: &[f64]) -> Result<AcquisitionValue> {
        let (x, batches) = self.unpack(flat)?;
        eno_objective(&self.model, &x, &batches, &self.level, &self.mc, self.incumbent)
    }

    fn tape_eval(&self, flat: &[f64], with_gradient: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let d = self.model.dim();
        if flat.len() != self.num_variables() {
            return Err(Error::DimensionMismatch {
                expected: self.num_variables(),
                got: flat.len(),
            });
        }
        let q = self.batch_size();
        let m = self.level.len();
        let points: Vec<Vec<f64>> = flat.chunks(d).map(<[f64]>::to_vec).collect();
        // pair layout: (0,0), then per batch: (0,b_j) for each j, then (b_j,b_l) l ≤ j
        let mut pairs = vec![(0, 0)];
        for i in 0..m {
            let off = 1 + i * q;
            for j in 0..q {
                pairs.push((0, off + j));
            }
            for j in 0..q {
                for l in 0..=j {
                    pairs.push((off + j, off + l));
                }
            }
        }
        let base = BaseFeatures::new(&self.model, points, pairs);
        let tape = Tape::new();
        let zero = tape.var(0.0);
        let mu: Vec<Var> = base.mu0.iter().map(|&v| tape.var(v)).collect();
        let c0: Vec<Var> = base.c0.iter().map(|&v| tape.var(v)).collect();
        let inc0 = tape.var(self.incumbent);

        let var_x = c0[0];
        let sd_x = var_x.sqrt_floored(VARIANCE_FLOOR);
        let first = sd_x * ((mu[0] - inc0) / sd_x).ei_kernel();
        let s = (var_x + self.model.noise_variance()).sqrt_floored(VARIANCE_FLOOR);
        let mut total = first;
        let per_batch = q + q * (q + 1) / 2;
        for i in 0..m {
            let z = self.level.nodes[i];
            let y = mu[0] + s * z;
            let inc = inc0.max(y);
            let off = 1 + i * per_batch;
            let w: Vec<Var> = (0..q).map(|j| c0[off + j] / s).collect();
            let means: Vec<Var> = (0..q).map(|j| mu[1 + i * q + j] + w[j] * z).collect();
            let mut cov = vec![vec![zero; q]; q];
            let mut idx = off + q;
            for j in 0..q {
                for l in 0..=j {
                    let v = c0[idx] - w[j] * w[l];
                    cov[j][l] = v;
                    cov[l][j] = v;
                    idx += 1;
                }
            }
            let l = tape_psd_cholesky(&cov);
            let val = tape_batch_improvement(&means, &l, &self.mc, inc, zero);
            total = total + val * self.level.weights[i];
        }
        let value = total.value();
        if !value.is_finite() {
            return Err(Error::NonFinite("ENO objective".into()));
        }
        if !with_gradient {
            return Ok((value, None));
        }
        let adj = tape.gradient(total);
        let mu_bar: Vec<f64> = mu.iter().map(|v| adj.wrt(*v)).collect();
        let c0_bar: Vec<f64> = c0.iter().map(|v| adj.wrt(*v)).collect();
        Ok((value, Some(base.backprop(&self.model, &mu_bar, &c0_bar).concat())))
    }
}

impl Objective for EnoObjective {
    fn num_variables(&self) -> usize {
        self.model.dim() * (1 + self.level.len() * self.batch_size())
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.tape_eval(x, false)?.0)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.tape_eval(x, true)?;
        Ok((v, g.expect("gradient requested")))
    }
}
