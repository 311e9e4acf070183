//! The BO loop on a benchmark function, the GAP metric and repeat
//! aggregation.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::functions::BenchmarkFunction;
use super::optima::known_optimum;
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparameters, Dataset, FitBounds, FitConfig, GpModel, KernelHyperparams};
use crate::optim::WarmStartState;
use crate::policy::{propose_next, Policy, ProposalConfig};

/// Normalized progress `(best − y₀)/(y* − y₀)`, always in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GapScore(f64);

impl GapScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// GAP for best value `best` given the initial best `y0` and the optimum
/// `y_star`, clamped to `[0, 1]`.
pub fn gap_value(y0: f64, best: f64, y_star: f64) -> Result<GapScore> {
    if !(y0.is_finite() && best.is_finite() && y_star.is_finite()) {
        return Err(Error::NonFinite("GAP inputs".into()));
    }
    let denom = y_star - y0;
    if denom <= 0.0 {
        // the initial design already reached the optimum (up to the oracle's
        // precision)
        return if best >= y_star - 1e-12 * y_star.abs().max(1.0) {
            Ok(GapScore(1.0))
        } else {
            Err(Error::InvalidArgument(format!("GAP undefined for y* = {y_star} ≤ y0 = {y0}")))
        };
    }
    Ok(GapScore(((best - y0) / denom).clamp(0.0, 1.0)))
}

/// One evaluation of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// 0 for the initial design, then `1..=budget`.
    pub iteration: usize,
    /// Evaluated point in native coordinates.
    pub point: Vec<f64>,
    pub value: f64,
    /// Best value observed so far, including this one.
    pub best: f64,
    /// Seconds spent fitting and proposing this point (0 for the initial
    /// design and when timing is disabled).
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTrace {
    pub function: BenchmarkFunction,
    pub policy: String,
    pub seed: u64,
    pub initial_count: usize,
    pub records: Vec<TraceRecord>,
}

impl BenchmarkTrace {
    /// Best value of the initial design.
    pub fn initial_best(&self) -> f64 {
        self.records[..self.initial_count]
            .iter()
            .map(|r| r.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn best(&self) -> f64 {
        self.records.last().map_or(f64::NEG_INFINITY, |r| r.best)
    }

    /// GAP after every record.
    pub fn gap_series(&self, y_star: f64) -> Result<Vec<f64>> {
        let y0 = self.initial_best();
        self.records
            .iter()
            .map(|r| gap_value(y0, r.best, y_star).map(GapScore::value))
            .collect()
    }

    /// Mean seconds per BO iteration.
    pub fn mean_iteration_time(&self) -> f64 {
        let it = &self.records[self.initial_count..];
        if it.is_empty() {
            0.0
        } else {
            it.iter().map(|r| r.wall_time_s).sum::<f64>() / it.len() as f64
        }
    }
}

/// Final GAP of a trace.
pub fn gap(trace: &BenchmarkTrace, y_star: f64) -> Result<GapScore> {
    gap_value(trace.initial_best(), trace.best(), y_star)
}

/// Settings of one BO run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    pub policy: Policy,
    /// BO iterations after the initial design; `None` means `20d`.
    pub iterations: Option<usize>,
    /// Initial design size; `None` means `2d`.
    pub initial_points: Option<usize>,
    pub proposal: ProposalConfig,
    /// Random restarts of the evidence maximization.
    pub fit_restarts: usize,
    pub fit_bounds: FitBounds,
    /// Warm-start tree optimization from the previous iteration.
    pub warm_start: bool,
    /// Record per-iteration wall time (disable for byte-reproducible
    /// output).
    pub record_wall_time: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Ei,
            iterations: None,
            initial_points: None,
            proposal: ProposalConfig::default(),
            fit_restarts: 5,
            fit_bounds: FitBounds::default(),
            warm_start: true,
            record_wall_time: true,
        }
    }
}

/// Seed of repeat `repeat` of `function`, independent of the policy so runs
/// of different policies share initial designs.
pub fn derive_seed(master: u64, function: &str, repeat: usize) -> u64 {
    // FNV-1a over the function name, then splitmix64 mixing
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in function.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(master ^ h) ^ repeat as u64)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn standardize(ys: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (ys.iter().map(|y| (y - mean) / sd).collect(), mean, sd)
}

/// Initial uniform design followed by the iteration budget in rounds of
/// fit → propose → evaluate. Modeling happens in `[0,1]^d` with
/// standardized outcomes.
pub fn run_bo(function: BenchmarkFunction, cfg: &BoConfig, seed: u64) -> Result<BenchmarkTrace> {
    let d = function.dim();
    let n0 = cfg.initial_points.unwrap_or(2 * d);
    let budget = cfg.iterations.unwrap_or(20 * d);
    if n0 < 2 {
        return Err(Error::Config("need at least 2 initial points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(n0 + budget);
    let mut ys: Vec<f64> = Vec::with_capacity(n0 + budget);
    let mut records = Vec::with_capacity(n0 + budget);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n0 {
        let u: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let x = function.to_native(&u);
        let y = function.evaluate(&x)?;
        best = best.max(y);
        records.push(TraceRecord {
            iteration: 0,
            point: x,
            value: y,
            best,
            wall_time_s: 0.0,
        });
        units.push(u);
        ys.push(y);
    }

    let mut prev_hp: Option<KernelHyperparams> = None;
    // previous tree solution with its first-level fantasies in native units
    let mut pending: Option<(WarmStartState, usize)> = None;
    for iter in 1..=budget {
        let start = Instant::now();
        let (zs, mean, sd) = standardize(&ys);
        let data = Dataset::from_rows(&units, &zs)?;
        let fit = fit_hyperparameters(
            &data,
            &FitConfig {
                restarts: cfg.fit_restarts,
                bounds: cfg.fit_bounds.clone(),
                seed: splitmix(seed ^ (iter as u64).wrapping_mul(0x2545_f491_4f6c_dd1d)),
                initial: prev_hp.clone(),
                ..FitConfig::default()
            },
        )?;
        let model = Arc::new(GpModel::new(data, fit.hyperparams.clone())?);
        prev_hp = Some(fit.hyperparams);
        let incumbent = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let warm = pending.take().and_then(|(mut state, idx)| {
            state.observed = ys[idx];
            cfg.warm_start.then_some(state)
        });
        let proposal = propose_next(
            &model,
            incumbent,
            &cfg.policy,
            warm.as_ref(),
            &cfg.proposal,
            splitmix(seed.wrapping_add(iter as u64)),
        )?;
        let elapsed = start.elapsed().as_secs_f64();
        let u: Vec<f64> = proposal.point.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let x = function.to_native(&u);
        let y = function.evaluate(&x)?;
        best = best.max(y);
        records.push(TraceRecord {
            iteration: iter,
            point: x,
            value: y,
            best,
            wall_time_s: if cfg.record_wall_time { elapsed } else { 0.0 },
        });
        if let Some(tree) = proposal.tree.filter(|t| t.layout().horizon() >= 2) {
            let state = WarmStartState {
                layout: tree.layout().clone(),
                solution: tree.into_flat(),
                fantasy_values: proposal.fantasy_values.iter().map(|f| mean + sd * f).collect(),
                observed: f64::NAN,
            };
            pending = Some((state, ys.len()));
        }
        units.push(u);
        ys.push(y);
    }
    Ok(BenchmarkTrace {
        function,
        policy: cfg.policy.to_string(),
        seed,
        initial_count: n0,
        records,
    })
}

/// Functions × repeats with one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub functions: Vec<BenchmarkFunction>,
    pub repeats: usize,
    pub seed: u64,
    pub bo: BoConfig,
}

/// Result of one repeat; failures keep their diagnostic.
#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub function: BenchmarkFunction,
    pub repeat: usize,
    pub seed: u64,
    pub result: std::result::Result<BenchmarkTrace, String>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Aggregate {
    pub function: String,
    pub policy: String,
    pub repeats: usize,
    pub failures: usize,
    pub y_star: f64,
    pub mean_gap: f64,
    /// Standard error of the mean GAP (0 for a single repeat).
    pub std_error: f64,
    pub mean_time_per_iter_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub outcomes: Vec<RepeatOutcome>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }
}

/// Runs every (function, repeat) pair in parallel and aggregates GAP per
/// function against the stored optima.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.repeats == 0 {
        return Err(Error::Config("repeats must be ≥ 1".into()));
    }
    if cfg.functions.is_empty() {
        return Err(Error::Config("no functions selected".into()));
    }
    let mut optima = Vec::with_capacity(cfg.functions.len());
    for f in &cfg.functions {
        optima.push(known_optimum(*f)?.value);
    }
    let jobs: Vec<(BenchmarkFunction, usize)> = cfg
        .functions
        .iter()
        .flat_map(|f| (0..cfg.repeats).map(move |r| (*f, r)))
        .collect();
    let outcomes: Vec<RepeatOutcome> = jobs
        .par_iter()
        .map(|&(function, repeat)| {
            let seed = derive_seed(cfg.seed, function.name(), repeat);
            RepeatOutcome {
                function,
                repeat,
                seed,
                result: run_bo(function, &cfg.bo, seed).map_err(|e| e.to_string()),
            }
        })
        .collect();
    let policy = cfg.bo.policy.to_string();
    let mut aggregates = Vec::with_capacity(cfg.functions.len());
    for (f, y_star) in cfg.functions.iter().zip(&optima) {
        let mine: Vec<&RepeatOutcome> = outcomes.iter().filter(|o| o.function == *f).collect();
        let mut gaps = Vec::new();
        let mut times = Vec::new();
        let mut failures = 0;
        for o in &mine {
            match &o.result {
                Ok(t) => match gap(t, *y_star) {
                    Ok(g) => {
                        gaps.push(g.value());
                        times.push(t.mean_iteration_time());
                    }
                    Err(_) => failures += 1,
                },
                Err(_) => failures += 1,
            }
        }
        let (mean_gap, std_error) = mean_and_stderr(&gaps);
        aggregates.push(Aggregate {
            function: f.name().to_string(),
            policy: policy.clone(),
            repeats: mine.len(),
            failures,
            y_star: *y_star,
            mean_gap,
            std_error,
            mean_time_per_iter_s: mean_and_stderr(&times).0,
        });
    }
    Ok(ExperimentResult { outcomes, aggregates })
}

/// Sample mean and standard error (`NaN` mean for no samples).
pub fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

