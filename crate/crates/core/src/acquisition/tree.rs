//! Multi-step scenario-tree objective.
//!
//! Two evaluators share one definition. [`multi_step_objective`] walks the
//! tree level by level with [`FantasyModel`]s: value each node by expected
//! improvement against its path incumbent, sample the noisy outcome with the
//! level's base samples, fantasize, recurse. [`tree_value_and_gradient`]
//! evaluates the same quantity in base-posterior coordinates on a scalar
//! tape, which gives exact gradients with respect to every node.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::base::BaseFeatures;
use super::layout::{TreeLayout, TreeVariables};
use super::{ei_analytic, AcquisitionValue, VARIANCE_FLOOR};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::fantasy::{FantasyModel, Parent};
use crate::gp::GpModel;
use crate::optim::Objective;
use crate::quadrature::BaseSampleTree;

struct Frontier {
    mean: f64,
    var: f64,
    incumbent: f64,
    weight: f64,
}

/// Value of the one-shot tree objective for fixed base samples, evaluated
/// through batched fantasy models.
pub fn multi_step_objective(
    model: &Arc<GpModel>,
    layout: &TreeLayout,
    vars: &TreeVariables,
    samples: &BaseSampleTree,
    incumbent: f64,
) -> Result<AcquisitionValue> {
    if vars.layout() != layout {
        return Err(Error::Shape("tree variables belong to a different layout".into()));
    }
    if layout.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: layout.dim(),
        });
    }
    layout.check_samples(samples)?;
    let noise = model.noise_variance();
    let starts = layout.level_starts();
    let root = vars.root().to_vec();
    let post = model.posterior_rows(&[root]);
    let mut frontier = vec![Frontier {
        mean: post.mean[0],
        var: post.covariance[(0, 0)],
        incumbent,
        weight: 1.0,
    }];
    let mut stages = vec![ei_analytic(post.mean[0], post.covariance[(0, 0)].max(VARIANCE_FLOOR).sqrt(), incumbent)];
    let mut parent = Parent::Base(model.clone());
    for t in 1..layout.horizon() {
        let level = &samples.levels[t - 1];
        let m = level.len();
        let b_count = frontier.len();
        let locations: Vec<DMatrix<f64>> = (0..b_count)
            .map(|b| DMatrix::from_row_slice(1, layout.dim(), vars.node(starts[t - 1] + b)))
            .collect();
        let mut outcomes = DMatrix::zeros(b_count * m, 1);
        for (b, node) in frontier.iter().enumerate() {
            let s = (node.var + noise).max(VARIANCE_FLOOR).sqrt();
            for j in 0..m {
                outcomes[(b * m + j, 0)] = node.mean + s * level.nodes[j];
            }
        }
        let fantasy = Arc::new(FantasyModel::fantasize(parent, &locations, &outcomes)?);
        let mut next = Vec::with_capacity(b_count * m);
        let mut stage = 0.0;
        for b in 0..b_count {
            for j in 0..m {
                let branch = b * m + j;
                let x = vars.node(starts[t] + branch).to_vec();
                let p = fantasy.posterior_rows(branch, &[x]);
                let inc = frontier[b].incumbent.max(outcomes[(branch, 0)]);
                let weight = frontier[b].weight * level.weights[j];
                let (mean, var) = (p.mean[0], p.covariance[(0, 0)]);
                stage += weight * ei_analytic(mean, var.max(VARIANCE_FLOOR).sqrt(), inc);
                next.push(Frontier {
                    mean,
                    var,
                    incumbent: inc,
                    weight,
                });
            }
        }
        stages.push(stage);
        frontier = next;
        parent = Parent::Fantasy(fantasy);
    }
    Ok(AcquisitionValue::from_stages(stages))
}

/// Per-node tape state.
#[derive(Clone)]
struct NodeVars<'t> {
    /// Coefficients on the whitened ancestor innovations.
    w: Vec<Var<'t>>,
    mean: Var<'t>,
    /// Noisy standard deviation used to fantasize children.
    noisy_sd: Option<Var<'t>>,
    incumbent: Var<'t>,
}

/// Tree objective value and (optionally) its gradient with respect to the
/// flat node coordinates.
pub fn tree_value_and_gradient(
    model: &GpModel,
    layout: &TreeLayout,
    flat: &[f64],
    samples: &BaseSampleTree,
    incumbent: f64,
    with_gradient: bool,
) -> Result<(AcquisitionValue, Option<Vec<f64>>)> {
    let d = layout.dim();
    if flat.len() != layout.num_variables() {
        return Err(Error::DimensionMismatch {
            expected: layout.num_variables(),
            got: flat.len(),
        });
    }
    layout.check_samples(samples)?;
    let n_nodes = layout.num_nodes();
    let k = layout.horizon();
    let noise = model.noise_variance();
    let paths: Vec<Vec<usize>> = (0..n_nodes).map(|p| layout.node_path(p)).collect();
    let ancestors: Vec<Vec<usize>> = paths
        .iter()
        .map(|path| {
            (0..path.len())
                .map(|i| layout.node_index(&path[..i]).expect("prefix of a valid path"))
                .collect()
        })
        .collect();

    let mut pairs = Vec::new();
    let mut diag_idx = vec![0; n_nodes];
    let mut anc_idx = vec![Vec::new(); n_nodes];
    for p in 0..n_nodes {
        diag_idx[p] = pairs.len();
        pairs.push((p, p));
        for &a in &ancestors[p] {
            anc_idx[p].push(pairs.len());
            pairs.push((a, p));
        }
    }
    let points: Vec<Vec<f64>> = flat.chunks(d).map(<[f64]>::to_vec).collect();
    let base = BaseFeatures::new(model, points, pairs);

    let tape = Tape::with_capacity(n_nodes * (8 + 4 * k * k));
    let mu0: Vec<Var> = base.mu0.iter().map(|&v| tape.var(v)).collect();
    let c0: Vec<Var> = base.c0.iter().map(|&v| tape.var(v)).collect();
    let zero = tape.var(0.0);
    let mut stage_vars: Vec<Var> = vec![zero; k];
    let mut nodes: Vec<NodeVars> = Vec::with_capacity(n_nodes);

    for p in 0..n_nodes {
        let path = &paths[p];
        let t = path.len();
        let mut w: Vec<Var> = Vec::with_capacity(t);
        for i in 0..t {
            let a = &nodes[ancestors[p][i]];
            let mut num = c0[anc_idx[p][i]];
            for j in 0..i {
                num = num - a.w[j] * w[j];
            }
            w.push(num / a.noisy_sd.expect("ancestors are not leaves"));
        }
        let mut var = c0[diag_idx[p]];
        let mut mean = mu0[p];
        let mut weight = 1.0;
        for (i, wi) in w.iter().enumerate() {
            var = var - wi.square();
            let level = &samples.levels[i];
            mean = mean + *wi * level.nodes[path[i]];
            weight *= level.weights[path[i]];
        }
        let inc = if t == 0 {
            tape.var(incumbent)
        } else {
            let parent = &nodes[ancestors[p][t - 1]];
            let z = samples.levels[t - 1].nodes[path[t - 1]];
            let y = parent.mean + parent.noisy_sd.expect("parent has children") * z;
            parent.incumbent.max(y)
        };
        let sd = var.sqrt_floored(VARIANCE_FLOOR);
        let ei = sd * ((mean - inc) / sd).ei_kernel();
        stage_vars[t] = stage_vars[t] + ei * weight;
        let noisy_sd = (t + 1 < k).then(|| (var + noise).sqrt_floored(VARIANCE_FLOOR));
        nodes.push(NodeVars {
            w,
            mean,
            noisy_sd,
            incumbent: inc,
        });
    }
    let total = stage_vars.iter().skip(1).fold(stage_vars[0], |acc, &s| acc + s);
    let value = AcquisitionValue::from_stages(stage_vars.iter().map(|v| v.value()).collect());
    debug_assert!((value.value - total.value()).abs() <= 1e-9 * total.value().abs().max(1.0));
    if !value.value.is_finite() {
        return Err(Error::NonFinite("tree objective".into()));
    }
    if !with_gradient {
        return Ok((value, None));
    }
    let adj = tape.gradient(total);
    let mu_bar: Vec<f64> = mu0.iter().map(|v| adj.wrt(*v)).collect();
    let c0_bar: Vec<f64> = c0.iter().map(|v| adj.wrt(*v)).collect();
    let grads = base.backprop(model, &mu_bar, &c0_bar);
    Ok((value, Some(grads.concat())))
}

/// One-shot tree objective over all node coordinates (fixed base samples).
#[derive(Debug, Clone)]
pub struct MultiStepObjective {
    pub model: Arc<GpModel>,
    pub layout: TreeLayout,
    pub samples: BaseSampleTree,
    pub incumbent: f64,
}

impl MultiStepObjective {
    pub fn new(model: Arc<GpModel>, layout: TreeLayout, samples: BaseSampleTree, incumbent: f64) -> Result<Self> {
        layout.check_samples(&samples)?;
        Ok(Self {
            model,
            layout,
            samples,
            incumbent,
        })
    }

    pub fn evaluate(&self, flat: &[f64]) -> Result<AcquisitionValue> {
        Ok(tree_value_and_gradient(&self.model, &self.layout, flat, &self.samples, self.incumbent, false)?.0)
    }
}

impl Objective for MultiStepObjective {
    fn num_variables(&self) -> usize {
        self.layout.num_variables()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x)?.value)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = tree_value_and_gradient(&self.model, &self.layout, x, &self.samples, self.incumbent, true)?;
        Ok((v.value, g.expect("gradient requested")))
    }
}

/// Tree objective with every node of a level forced to one shared point.
///
/// Variables are the root followed by one point per deeper level; any tied
/// solution is feasible for the untied problem, so its optimum bounds the
/// untied optimum from below.
#[derive(Debug, Clone)]
pub struct TiedTreeObjective {
    pub inner: MultiStepObjective,
}

impl TiedTreeObjective {
    pub fn new(inner: MultiStepObjective) -> Self {
        Self { inner }
    }

    /// Replicates each level's shared point across that level's nodes.
    pub fn expand(&self, tied: &[f64]) -> Vec<f64> {
        let layout = &self.inner.layout;
        let d = layout.dim();
        let mut flat = Vec::with_capacity(layout.num_variables());
        for (level, size) in layout.level_sizes().into_iter().enumerate() {
            for _ in 0..size {
                flat.extend_from_slice(&tied[level * d..(level + 1) * d]);
            }
        }
        flat
    }
}

impl Objective for TiedTreeObjective {
    fn num_variables(&self) -> usize {
        self.inner.layout.horizon() * self.inner.layout.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.inner.value(&self.expand(x))
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.inner.value_and_gradient(&self.expand(x))?;
        let layout = &self.inner.layout;
        let d = layout.dim();
        let mut tied = vec![0.0; x.len()];
        let mut node = 0;
        for (level, size) in layout.level_sizes().into_iter().enumerate() {
            for _ in 0..size {
                for i in 0..d {
                    tied[level * d + i] += g[node * d + i];
                }
                node += 1;
            }
        }
        Ok((v, tied))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, KernelHyperparams};
    use crate::quadrature::{gauss_hermite_rule, SampleMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, d: usize, seed: u64) -> Arc<GpModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| (6.0 * p[0]).sin() + 0.3 * p.iter().sum::<f64>()).collect();
        let hp = KernelHyperparams::new(vec![0.3; d], 1.2, 1e-3, 0.05).unwrap();
        Arc::new(GpModel::new(Dataset::from_rows(&pts, &ys).unwrap(), hp).unwrap())
    }

    fn random_flat(layout: &TreeLayout, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..layout.num_variables()).map(|_| rng.random()).collect()
    }

    /// Posterior mean and variance at `p` from a dense solve on `(xs, ys)`.
    fn dense_posterior(hp: &KernelHyperparams, xs: &[Vec<f64>], ys: &[f64], p: &[f64]) -> (f64, f64) {
        let n = xs.len();
        let k = |a: &[f64], b: &[f64]| crate::gp::kernel::matern52(a, b, &hp.lengthscales, hp.signal_variance);
        let mut km = DMatrix::from_fn(n, n, |i, j| k(&xs[i], &xs[j]));
        for i in 0..n {
            km[(i, i)] += hp.noise_variance;
        }
        let kp = nalgebra::DVector::from_fn(n, |i, _| k(&xs[i], p));
        let resid = nalgebra::DVector::from_fn(n, |i, _| ys[i] - hp.mean_constant);
        let lu = km.lu();
        let a = lu.solve(&resid).unwrap();
        let b = lu.solve(&kp).unwrap();
        (hp.mean_constant + kp.dot(&a), k(p, p) - kp.dot(&b))
    }

    #[test]
    fn one_step_is_expected_improvement() {
        let m = model(12, 2, 3);
        let layout = TreeLayout::one_step(2);
        let samples = layout.draw_base_samples(0).unwrap();
        for s in 0..5 {
            let x = random_flat(&layout, s);
            let (mu, sd) = m.predict(&x).unwrap();
            let ei = ei_analytic(mu, sd, 0.8);
            let (v, _) = tree_value_and_gradient(&m, &layout, &x, &samples, 0.8, false).unwrap();
            assert!((v.value - ei).abs() < 1e-12, "{} vs {ei}", v.value);
            let vars = TreeVariables::new(layout.clone(), x).unwrap();
            let f = multi_step_objective(&m, &layout, &vars, &samples, 0.8).unwrap();
            assert!((f.value - ei).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_matches_fantasy_models() {
        let m = model(15, 2, 5);
        for (counts, mode) in [
            (vec![3], SampleMode::GaussHermite),
            (vec![4, 2], SampleMode::MonteCarlo),
            (vec![2, 2, 2], SampleMode::GaussHermite),
        ] {
            let layout = TreeLayout::new(counts.len() + 1, counts, 2, mode).unwrap();
            let samples = layout.draw_base_samples(9).unwrap();
            let x = random_flat(&layout, 1);
            let (tape, _) = tree_value_and_gradient(&m, &layout, &x, &samples, 1.0, false).unwrap();
            let vars = TreeVariables::new(layout.clone(), x).unwrap();
            let walk = multi_step_objective(&m, &layout, &vars, &samples, 1.0).unwrap();
            for (a, b) in tape.stages.iter().zip(&walk.stages) {
                assert!((a - b).abs() < 1e-9 * b.abs().max(1e-3), "{a} vs {b}");
            }
        }
    }

    /// Two-step value by explicit nested loops over Gauss–Hermite nodes with
    /// dense refits of the augmented data.
    #[test]
    fn two_step_matches_nested_dense_oracle() {
        let m = model(8, 1, 11);
        let hp = m.hyperparams().clone();
        let xs: Vec<Vec<f64>> = (0..8).map(|i| m.dataset().inputs().row(i).iter().copied().collect()).collect();
        let ys: Vec<f64> = m.dataset().outcomes().iter().copied().collect();
        let layout = TreeLayout::new(2, vec![3], 1, SampleMode::GaussHermite).unwrap();
        let samples = layout.draw_base_samples(0).unwrap();
        let flat = vec![0.37, 0.1, 0.62, 0.9];
        let inc = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (nodes, weights) = gauss_hermite_rule(3).unwrap();
        let (mu, var) = dense_posterior(&hp, &xs, &ys, &[flat[0]]);
        let mut oracle = ei_analytic(mu, var.sqrt(), inc);
        for j in 0..3 {
            let y = mu + (var + hp.noise_variance).sqrt() * nodes[j];
            let mut xs2 = xs.clone();
            let mut ys2 = ys.clone();
            xs2.push(vec![flat[0]]);
            ys2.push(y);
            let (m2, v2) = dense_posterior(&hp, &xs2, &ys2, &[flat[1 + j]]);
            oracle += weights[j] * ei_analytic(m2, v2.max(0.0).sqrt(), inc.max(y));
        }
        let (v, _) = tree_value_and_gradient(&m, &layout, &flat, &samples, inc, false).unwrap();
        assert!((v.value - oracle).abs() < 1e-8, "{} vs {oracle}", v.value);
    }

    fn check_gradient(obj: &dyn Objective, x: &[f64], tol: f64) {
        let (_, g) = obj.value_and_gradient(x).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < tol * fd.abs().max(1e-2), "coord {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn tree_gradients_match_finite_differences() {
        let m = model(10, 2, 7);
        for counts in [vec![], vec![3], vec![3, 2]] {
            let layout = TreeLayout::new(counts.len() + 1, counts, 2, SampleMode::GaussHermite).unwrap();
            let samples = layout.draw_base_samples(0).unwrap();
            let obj = MultiStepObjective::new(m.clone(), layout.clone(), samples, 0.9).unwrap();
            let x: Vec<f64> = random_flat(&layout, 4).iter().map(|v| 0.1 + 0.8 * v).collect();
            check_gradient(&obj, &x, 1e-4);
        }
    }

    #[test]
    fn tied_objective_replicates_and_sums() {
        let m = model(10, 2, 8);
        let layout = TreeLayout::new(3, vec![3, 2], 2, SampleMode::GaussHermite).unwrap();
        let samples = layout.draw_base_samples(0).unwrap();
        let inner = MultiStepObjective::new(m, layout, samples, 0.9).unwrap();
        let tied = TiedTreeObjective::new(inner.clone());
        let t = vec![0.2, 0.3, 0.6, 0.5, 0.8, 0.1];
        let flat = tied.expand(&t);
        assert_eq!(flat.len(), inner.num_variables());
        assert_eq!(&flat[2..4], &[0.6, 0.5]);
        assert_eq!(&flat[flat.len() - 2..], &[0.8, 0.1]);
        assert_eq!(tied.value(&t).unwrap(), inner.value(&flat).unwrap());
        check_gradient(&tied, &t, 1e-4);
    }

    #[test]
    fn path_layout_fantasizes_the_mean() {
        let m = model(10, 1, 2);
        let layout = TreeLayout::path(2, 1).unwrap();
        let samples = layout.draw_base_samples(0).unwrap();
        let flat = vec![0.4, 0.7];
        let (v, _) = tree_value_and_gradient(&m, &layout, &flat, &samples, 0.5, false).unwrap();
        let (mu, _) = m.predict(&[0.4]).unwrap();
        let data = m.dataset();
        let mut xs: Vec<Vec<f64>> = (0..data.len()).map(|i| vec![data.inputs()[(i, 0)]]).collect();
        let mut ys: Vec<f64> = data.outcomes().iter().copied().collect();
        xs.push(vec![0.4]);
        ys.push(mu);
        let (m2, v2) = dense_posterior(m.hyperparams(), &xs, &ys, &[0.7]);
        let expect = ei_analytic(m2, v2.sqrt(), 0.5_f64.max(mu));
        assert!((v.stages[1] - expect).abs() < 1e-8);
    }
}
