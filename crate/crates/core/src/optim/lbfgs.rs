//! Projected limited-memory BFGS for box-constrained problems.
//!
//! Directions come from the two-loop recursion restricted to the free
//! variables (those not pinned at a bound by the sign of the gradient).
//! Steps are projected back onto the box and accepted by an Armijo test on
//! the projected step, so every accepted iterate decreases the objective.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Stopping rules and memory size.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    /// Stop when the projected gradient's largest entry falls below this.
    pub grad_tol: f64,
    pub history: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: 1e-6,
            history: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn free_mask(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn masked(v: &[f64], mask: &[bool]) -> Vec<f64> {
    v.iter()
        .zip(mask)
        .map(|(x, &m)| if m { *x } else { 0.0 })
        .collect()
}

/// Two-loop recursion applied to the masked gradient.
fn two_loop(g: &[f64], mask: &[bool], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = masked(g, mask);
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let sm = masked(s, mask);
        let ym = masked(y, mask);
        let sy = dot(&sm, &ym);
        if sy <= 0.0 {
            alphas.push(None);
            continue;
        }
        let a = dot(&sm, &q) / sy;
        for i in 0..q.len() {
            q[i] -= a * ym[i];
        }
        alphas.push(Some((a, sy, sm, ym)));
    }
    if let Some((s, y)) = pairs.back() {
        let sm = masked(s, mask);
        let ym = masked(y, mask);
        let yy = dot(&ym, &ym);
        let sy = dot(&sm, &ym);
        if yy > 0.0 && sy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for entry in alphas.into_iter().rev().flatten() {
        let (a, sy, sm, ym) = entry;
        let b = dot(&ym, &q) / sy;
        for i in 0..q.len() {
            q[i] += (a - b) * sm[i];
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    for (v, &m) in q.iter_mut().zip(mask) {
        if !m {
            *v = 0.0;
        }
    }
    q
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0` (projected
/// onto the box first). `f` returns the value and gradient.
pub fn minimize_box<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    cfg: &LbfgsConfig,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: lower.len().min(upper.len()),
        });
    }
    if (0..n).any(|i| !(lower[i] <= upper[i])) {
        return Err(Error::InvalidArgument("empty box".into()));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("objective at the initial point ({fx})")));
    }
    let initial_value = fx;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(cfg.history);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let mask = free_mask(&x, &g, lower, upper);
        let pg = masked(&g, &mask);
        let pg_norm = pg.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if pg_norm < cfg.grad_tol {
            converged = true;
            break;
        }
        let mut dir = if cfg.history > 0 && !pairs.is_empty() {
            two_loop(&g, &mask, &pairs)
        } else {
            pg.iter().map(|v| -v).collect()
        };
        if dot(&dir, &pg) >= 0.0 {
            pairs.clear();
            dir = pg.iter().map(|v| -v).collect();
        }

        let mut step = match step_search(&mut f, &x, fx, &g, &dir, lower, upper, pairs.is_empty(), pg_norm)? {
            (Some(s), e) => {
                evaluations += e;
                Some(s)
            }
            (None, e) => {
                evaluations += e;
                None
            }
        };
        if step.is_none() && !pairs.is_empty() {
            // quasi-Newton direction failed: retry along steepest descent
            pairs.clear();
            let sd: Vec<f64> = pg.iter().map(|v| -v).collect();
            let (s, e) = step_search(&mut f, &x, fx, &g, &sd, lower, upper, true, pg_norm)?;
            evaluations += e;
            step = s;
        }
        let Some((x_new, f_new, g_new)) = step else {
            // no decrease available at working precision
            converged = true;
            break;
        };
        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if cfg.history > 0 && sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
        }
        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if decrease <= 1e-15 * fx.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(LbfgsOutcome {
        x,
        value: fx,
        initial_value,
        iterations,
        evaluations,
        converged,
    })
}

type Step = (Vec<f64>, f64, Vec<f64>);

/// Projected backtracking along `dir`; returns the accepted point (if any)
/// and the number of evaluations spent.
#[allow(clippy::too_many_arguments)]
fn step_search<F>(
    f: &mut F,
    x: &[f64],
    fx: f64,
    g: &[f64],
    dir: &[f64],
    lower: &[f64],
    upper: &[f64],
    steepest: bool,
    pg_norm: f64,
) -> Result<(Option<Step>, usize)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dir_norm = dir.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if dir_norm == 0.0 {
        return Ok((None, 0));
    }
    // unscaled steepest-descent steps get an initial length tied to the
    // gradient size so the first trial stays inside a unit box
    let mut alpha = if steepest { (1.0 / pg_norm).min(1.0) } else { 1.0 };
    let mut evals = 0;
    for _ in 0..MAX_BACKTRACKS {
        let mut xt: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        project(&mut xt, lower, upper);
        let moved: Vec<f64> = xt.iter().zip(x).map(|(a, b)| a - b).collect();
        let pred = dot(g, &moved);
        if moved.iter().all(|v| *v == 0.0) {
            return Ok((None, evals));
        }
        evals += 1;
        match f(&xt) {
            Ok((ft, gt)) if ft.is_finite() && gt.iter().all(|v| v.is_finite()) => {
                if pred < 0.0 && ft <= fx + ARMIJO * pred {
                    return Ok((Some((xt, ft, gt)), evals));
                }
            }
            Ok(_) | Err(Error::NonFinite(_)) | Err(Error::Decomposition(_)) => {}
            Err(e) => return Err(e),
        }
        alpha *= 0.5;
    }
    Ok((None, evals))
}

/// Maximizes `f` over the box; values and gradients are those of `f`.
pub fn maximize_box<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    cfg: &LbfgsConfig,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let out = minimize_box(
        |x| {
            let (v, g) = f(x)?;
            Ok((-v, g.into_iter().map(|v| -v).collect()))
        },
        x0,
        lower,
        upper,
        cfg,
    )?;
    Ok(LbfgsOutcome {
        value: -out.value,
        initial_value: -out.initial_value,
        ..out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Ok((v, g))
    }

    #[test]
    fn solves_rosenbrock_in_box() {
        let cfg = LbfgsConfig {
            max_iters: 500,
            ..Default::default()
        };
        let out = minimize_box(rosenbrock, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &cfg).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-4, "{:?}", out);
        assert!((out.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn active_bound_solution() {
        // minimum of (x-2)^2 + (y+1)^2 over [0,1]^2 is at (1, 0)
        let f = |x: &[f64]| Ok(((x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)]));
        let out = minimize_box(f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(out.x, vec![1.0, 0.0]);
    }

    #[test]
    fn maximize_flips_sign() {
        let f = |x: &[f64]| Ok((-(x[0] - 0.3).powi(2), vec![-2.0 * (x[0] - 0.3)]));
        let out = maximize_box(f, &[0.9], &[0.0], &[1.0], &LbfgsConfig::default()).unwrap();
        assert!((out.x[0] - 0.3).abs() < 1e-6);
        assert!(out.value >= out.initial_value);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert!(minimize_box(f, &[0.5], &[0.0], &[1.0], &LbfgsConfig::default()).is_err());
    }
}
