//! Box-constrained optimization of acquisition and tree objectives.
//!
//! Every objective is maximized over the unit box. Restarts run
//! independently (in parallel when a rayon pool is available) and the best
//! final iterate wins; ties go to the lowest restart index so results do not
//! depend on scheduling.

pub mod lbfgs;
mod warm;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use lbfgs::{maximize_box, LbfgsConfig};

pub use warm::{
    eta_schedule, gamma_schedule, perturb, promote_subtree, warm_start_init, Perturbation, WarmStart,
    WarmStartState,
};

/// A differentiable function of a flat vector in `[0,1]^n`.
pub trait Objective: Sync {
    fn num_variables(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Gradient of `objective` at `x`.
pub fn gradient(objective: &dyn Objective, x: &[f64]) -> Result<Vec<f64>> {
    let (v, g) = objective.value_and_gradient(x)?;
    if !v.is_finite() || g.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective or gradient".into()));
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Total restarts per acquisition optimization.
    pub restarts: usize,
    /// Of `restarts`, how many come from the warm start when available.
    pub warm_restarts: usize,
    /// Of `restarts`, how many start from an optimized tied tree (one
    /// shared point per level) for branching trees. Off by default.
    pub tied_restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub history: usize,
    /// Uniform candidates drawn per fresh restart; with more than one, inits
    /// are picked from the pool by [`random_inits`]. `1` means plain
    /// uniform draws.
    pub raw_samples: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            warm_restarts: 5,
            tied_restarts: 0,
            max_iters: 100,
            grad_tol: 1e-6,
            history: 10,
            raw_samples: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be ≥ 1".into()));
        }
        if self.warm_restarts + self.tied_restarts > self.restarts {
            return Err(Error::Config("warm plus tied restarts exceed total restarts".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("gradient tolerance must be positive".into()));
        }
        if self.raw_samples == 0 {
            return Err(Error::Config("raw_samples must be ≥ 1".into()));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            history: self.history,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartRecord {
    /// Final iterate of this restart.
    pub x: Vec<f64>,
    pub initial_value: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct BoxSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// One entry per init, `None` for restarts that failed.
    pub restarts: Vec<Option<RestartRecord>>,
    pub failures: Vec<String>,
}

/// Maximizes `objective` over `[0,1]^n` from every init and returns the best
/// final iterate.
pub fn optimize_box(objective: &dyn Objective, inits: &[Vec<f64>], cfg: &OptimizerConfig) -> Result<BoxSolution> {
    let n = objective.num_variables();
    if inits.is_empty() {
        return Err(Error::InvalidArgument("optimize_box needs at least one init".into()));
    }
    if let Some(bad) = inits.iter().find(|x| x.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
    }
    if inits.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("inits must lie in the unit box".into()));
    }
    let lower = vec![0.0; n];
    let upper = vec![1.0; n];
    let lcfg = cfg.lbfgs();
    let runs: Vec<Result<lbfgs::LbfgsOutcome>> = inits
        .par_iter()
        .map(|x0| maximize_box(|x| objective.value_and_gradient(x), x0, &lower, &upper, &lcfg))
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut restarts = Vec::with_capacity(runs.len());
    let mut failures = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(out) => {
                restarts.push(Some(RestartRecord {
                    x: out.x.clone(),
                    initial_value: out.initial_value,
                    value: out.value,
                    iterations: out.iterations,
                    converged: out.converged,
                }));
                if best.as_ref().is_none_or(|(_, b)| out.value > *b) {
                    best = Some((out.x, out.value));
                }
            }
            Err(e) => {
                restarts.push(None);
                failures.push(format!("restart {i}: {e}"));
            }
        }
    }
    let (x, value) = best.ok_or_else(|| Error::Optimization(format!("every restart failed: {}", failures.join("; "))))?;
    Ok(BoxSolution {
        x,
        value,
        restarts,
        failures,
    })
}

/// Temperature of the Boltzmann selection in [`random_inits`], applied to
/// standardized objective values.
pub const INIT_TEMPERATURE: f64 = 1.0;

/// `count` inits chosen from a pool of `count · raw_samples` uniform draws.
///
/// The best draw is always kept; the rest are sampled without replacement
/// with probability `∝ exp(η · z)`, `z` the standardized objective value.
/// Taking the top draws instead would put every restart in the same basin.
pub fn random_inits<R: Rng>(
    objective: &dyn Objective,
    count: usize,
    raw_samples: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = objective.num_variables();
    let raw = raw_samples.max(1);
    let pool: Vec<Vec<f64>> = (0..count * raw)
        .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
        .collect();
    if raw == 1 || count == 0 {
        return Ok(pool);
    }
    let values: Vec<f64> = pool
        .par_iter()
        .map(|c| objective.value(c).ok().filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
    let sd = (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / finite.len().max(1) as f64).sqrt();
    let mut weights: Vec<f64> = values
        .iter()
        .map(|v| match (v.is_finite(), sd > 0.0) {
            (false, _) => 0.0,
            (true, true) => (INIT_TEMPERATURE * (v - mean) / sd).exp(),
            (true, false) => 1.0,
        })
        .collect();
    let mut chosen = Vec::with_capacity(count);
    let best = (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    chosen.push(best);
    weights[best] = 0.0;
    while chosen.len() < count {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = weights.iter().rposition(|w| *w > 0.0).expect("positive total");
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // only non-finite draws left: take them in order
            (0..pool.len()).find(|i| !chosen.contains(i)).expect("pool larger than count")
        };
        chosen.push(pick);
        weights[pick] = 0.0;
    }
    Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
}
