//! Fast versus from-scratch fantasy conditioning timings.
//!
//! For each `(n, m)` the fast path fantasizes `m` outcomes at one location
//! on top of an existing model's cache and queries every branch; the naive
//! path builds and factors the augmented kernel matrix once per fantasy and
//! answers the same queries. Reported times are medians over `reps` after
//! one discarded warm-up.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::output::write_atomic;
use crate::error::{Error, Result};
use crate::fantasy::FantasyModel;
use crate::gp::kernel::kernel_matrix;
use crate::gp::{Dataset, GpModel, KernelHyperparams, Posterior, RootKind};

/// Largest supported training-set size.
pub const MAX_TIMING_SIZE: usize = 2048;

/// The `[fantasy_bench]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub sizes: Vec<usize>,
    pub fantasies: Vec<usize>,
    /// Timed repetitions (plus one warm-up).
    pub reps: usize,
    /// Rank of the cached root; `None` caches the exact factor.
    pub root_rank: Option<usize>,
    pub query_points: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            sizes: vec![32, 128, 256, 512, 1024],
            fantasies: vec![1, 16, 128],
            reps: 5,
            root_rank: Some(64),
            query_points: 16,
            dim: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    pub m: usize,
    pub fast_s: f64,
    pub naive_s: f64,
    pub speedup: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(f64, T)> {
    let start = Instant::now();
    let out = f()?;
    Ok((start.elapsed().as_secs_f64(), out))
}

/// Conditions on each fantasy from scratch: kernel matrix, Cholesky, and
/// triangular solves for the queries.
fn naive_posteriors(
    xs: &DMatrix<f64>,
    ys: &DVector<f64>,
    loc: &DMatrix<f64>,
    outcomes: &[f64],
    queries: &DMatrix<f64>,
    hp: &KernelHyperparams,
) -> Result<Vec<Posterior>> {
    let n = xs.nrows();
    let mut out = Vec::with_capacity(outcomes.len());
    let kqq = kernel_matrix(queries, queries, hp);
    for &y_new in outcomes {
        let mut aug = xs.clone().insert_row(n, 0.0);
        aug.row_mut(n).copy_from(&loc.row(0));
        let mut k = kernel_matrix(&aug, &aug, hp);
        for i in 0..=n {
            k[(i, i)] += hp.noise_variance;
        }
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::Decomposition("augmented kernel matrix".into()))?;
        let kxq = kernel_matrix(&aug, queries, hp);
        let mut resid = ys.clone().insert_row(n, y_new);
        resid.add_scalar_mut(-hp.mean_constant);
        let l = chol.l();
        let a = l
            .solve_lower_triangular(&kxq)
            .ok_or_else(|| Error::Decomposition("triangular solve".into()))?;
        let b = l
            .solve_lower_triangular(&resid)
            .ok_or_else(|| Error::Decomposition("triangular solve".into()))?;
        out.push(Posterior {
            mean: a.tr_mul(&b).add_scalar(hp.mean_constant),
            covariance: &kqq - a.tr_mul(&a),
        });
    }
    Ok(out)
}

/// One `(n, m)` cell.
pub fn time_cell(n: usize, m: usize, cfg: &TimingConfig) -> Result<TimingRow> {
    if n == 0 || n > MAX_TIMING_SIZE {
        return Err(Error::InvalidArgument(format!("size {n} outside 1..={MAX_TIMING_SIZE}")));
    }
    if m == 0 || cfg.reps == 0 || cfg.dim == 0 || cfg.query_points == 0 {
        return Err(Error::InvalidArgument("fantasies, reps, dim and query points must be ≥ 1".into()));
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((n as u64) << 20) ^ m as u64);
    let xs = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
    let ys = DVector::from_fn(n, |i, _| (6.0 * xs[(i, 0)]).sin() + 0.1 * rng.random::<f64>());
    let hp = KernelHyperparams::new(vec![0.3; d], 1.0, 1e-3, 0.0)?;
    let kind = match cfg.root_rank {
        Some(r) => RootKind::Pivoted { rank: r.min(n) },
        None => RootKind::Exact,
    };
    let base = Arc::new(GpModel::with_root(Dataset::new(xs.clone(), ys.clone())?, hp.clone(), kind)?);
    let loc = DMatrix::from_fn(1, d, |_, _| rng.random::<f64>());
    let outcomes: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let queries = DMatrix::from_fn(cfg.query_points, d, |_, _| rng.random::<f64>());

    let mut fast = Vec::with_capacity(cfg.reps);
    let mut naive = Vec::with_capacity(cfg.reps);
    for rep in 0..=cfg.reps {
        let (tf, _) = timed(|| {
            let f = FantasyModel::fantasize(
                base.clone(),
                std::slice::from_ref(&loc),
                &DMatrix::from_column_slice(m, 1, &outcomes),
            )?;
            f.posterior_all(&vec![queries.clone(); m])
        })?;
        let (tn, _) = timed(|| naive_posteriors(&xs, &ys, &loc, &outcomes, &queries, &hp))?;
        if rep > 0 {
            fast.push(tf);
            naive.push(tn);
        }
    }
    let (fast_s, naive_s) = (median(fast), median(naive));
    Ok(TimingRow {
        n,
        m,
        fast_s,
        naive_s,
        speedup: naive_s / fast_s,
    })
}

/// Every `(n, m)` combination of the configured sizes.
pub fn fantasy_benchmark(cfg: &TimingConfig) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::with_capacity(cfg.sizes.len() * cfg.fantasies.len());
    for &n in &cfg.sizes {
        for &m in &cfg.fantasies {
            rows.push(time_cell(n, m, cfg)?);
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log t` against `log n`.
pub fn scaling_exponent(ns: &[usize], times: &[f64]) -> Result<f64> {
    if ns.len() != times.len() || ns.len() < 2 {
        return Err(Error::InvalidArgument("need at least two (n, time) pairs".into()));
    }
    if times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("times must be positive".into()));
    }
    let lx: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ly: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// CSV `n,m,fast_s,naive_s,speedup`.
pub fn timing_csv(rows: &[TimingRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(["n", "m", "fast_s", "naive_s", "speedup"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.fast_s.to_string(),
            r.naive_s.to_string(),
            r.speedup.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

pub fn write_timing_csv(rows: &[TimingRow], path: &Path) -> Result<()> {
    write_atomic(path, &timing_csv(rows)?)
}
