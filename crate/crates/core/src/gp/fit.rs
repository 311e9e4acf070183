//! Type-II maximum likelihood for the kernel hyperparameters.
//!
//! The constant mean is profiled out by generalized least squares, so the
//! optimizer works on `[log ℓ, log σ_f², log σ_n²]` only. Shifting every
//! outcome by `c` shifts the profiled mean by `c` and leaves the evidence
//! unchanged.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernel::{self, matern52_grad_log_lengthscales};
use super::{Dataset, KernelHyperparams};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::lbfgs::{minimize_box, LbfgsConfig};

/// Box for the log-parameter search, in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct FitBounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            lengthscale: (1e-2, 1e1),
            signal_variance: (1e-3, 1e3),
            noise_variance: (1e-6, 1e-1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Random log-uniform initializations in addition to `initial`.
    pub restarts: usize,
    pub seed: u64,
    pub bounds: FitBounds,
    pub max_iters: usize,
    /// Previous fit (or any starting guess) tried first.
    pub initial: Option<KernelHyperparams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            bounds: FitBounds::default(),
            max_iters: 200,
            initial: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub hyperparams: KernelHyperparams,
    pub log_evidence: f64,
    /// Log evidence at every initialization that was tried.
    pub initial_log_evidences: Vec<f64>,
}

struct Evidence {
    value: f64,
    mean_constant: f64,
    /// Gradient with respect to the log parameters.
    grad: Vec<f64>,
}

/// Profiled log marginal likelihood and its gradient at `theta`.
fn evidence(rows: &[Vec<f64>], y: &DVector<f64>, theta: &[f64], with_grad: bool) -> Result<Evidence> {
    let n = rows.len();
    let d = theta.len() - 2;
    let hp = KernelHyperparams::from_log_params(theta, 0.0);
    let mut k = kernel::kernel_matrix_rows(rows, rows, &hp);
    for i in 0..n {
        k[(i, i)] += hp.noise_variance;
    }
    let factor = linalg::jittered_cholesky(&k)?;
    let chol = nalgebra::Cholesky::pack_dirty(factor.lower);
    let l = chol.l_dirty();
    let ones = DVector::from_element(n, 1.0);
    let a = l
        .solve_lower_triangular(&ones)
        .ok_or_else(|| Error::Decomposition("evidence solve".into()))?;
    let b = l
        .solve_lower_triangular(y)
        .ok_or_else(|| Error::Decomposition("evidence solve".into()))?;
    let c = a.dot(&b) / a.dot(&a);
    let r = &b - &a * c;
    let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    let value = -0.5 * r.norm_squared() - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let mut grad = vec![0.0; d + 2];
    if with_grad {
        let resid = y.add_scalar(-c);
        let alpha = chol.solve(&resid);
        let kinv = chol.inverse();
        // W = ααᵀ − K̃⁻¹ ; dlogp/dθ = ½ tr(W ∂K̃/∂θ)
        let w = DMatrix::from_fn(n, n, |i, j| alpha[i] * alpha[j] - kinv[(i, j)]);
        let mut buf = vec![0.0; d];
        let mut g_ls = vec![0.0; d];
        let mut g_sf = 0.0;
        for i in 0..n {
            for j in 0..i {
                let kij = kernel::matern52(&rows[i], &rows[j], &hp.lengthscales, hp.signal_variance);
                g_sf += w[(i, j)] * kij;
                matern52_grad_log_lengthscales(&rows[i], &rows[j], &hp.lengthscales, hp.signal_variance, &mut buf);
                for t in 0..d {
                    g_ls[t] += w[(i, j)] * buf[t];
                }
            }
        }
        // off-diagonal terms appear twice; diagonal of K is σ_f²
        let trace_w: f64 = (0..n).map(|i| w[(i, i)]).sum();
        grad[..d].copy_from_slice(&g_ls);
        grad[d] = g_sf + 0.5 * trace_w * hp.signal_variance;
        grad[d + 1] = 0.5 * trace_w * hp.noise_variance;
    }
    Ok(Evidence {
        value,
        mean_constant: c,
        grad,
    })
}

/// Profiled log evidence of `hp` (its mean constant is ignored) on `data`.
pub fn log_evidence(data: &Dataset, hp: &KernelHyperparams) -> Result<f64> {
    let rows = kernel::rows(data.inputs());
    Ok(evidence(&rows, data.outcomes(), &hp.to_log_params(), false)?.value)
}

fn log_bounds(d: usize, b: &FitBounds) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![b.lengthscale.0.ln(); d];
    let mut hi = vec![b.lengthscale.1.ln(); d];
    lo.push(b.signal_variance.0.ln());
    hi.push(b.signal_variance.1.ln());
    lo.push(b.noise_variance.0.ln());
    hi.push(b.noise_variance.1.ln());
    (lo, hi)
}

/// Maximizes the log evidence over bounded log-parameters.
///
/// Starts from `cfg.initial` (or a fixed default when absent) plus
/// `cfg.restarts` log-uniform draws; the best optimized result is returned,
/// so its evidence is at least that of every starting point.
pub fn fit_hyperparameters(data: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if data.outcomes().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("outcomes".into()));
    }
    let d = data.dim();
    let rows = kernel::rows(data.inputs());
    let y = data.outcomes();
    let (lo, hi) = log_bounds(d, &cfg.bounds);

    let mut inits: Vec<Vec<f64>> = Vec::new();
    match &cfg.initial {
        Some(hp) if hp.dim() == d => inits.push(hp.to_log_params()),
        _ => {
            let mut t = vec![0.2f64.ln(); d];
            t.push(0.0);
            t.push(1e-4f64.ln());
            inits.push(t);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        inits.push((0..d + 2).map(|i| rng.random_range(lo[i]..=hi[i])).collect());
    }

    let lcfg = LbfgsConfig {
        max_iters: cfg.max_iters,
        grad_tol: 1e-6,
        history: 10,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut initial_values = Vec::with_capacity(inits.len());
    let mut last_err = None;
    for init in inits {
        let mut x0 = init;
        for i in 0..x0.len() {
            x0[i] = x0[i].clamp(lo[i], hi[i]);
        }
        let run = minimize_box(
            |theta| {
                let e = evidence(&rows, y, theta, true)?;
                Ok((-e.value, e.grad.iter().map(|g| -g).collect()))
            },
            &x0,
            &lo,
            &hi,
            &lcfg,
        );
        match run {
            Ok(out) => {
                initial_values.push(-out.initial_value);
                let v = -out.value;
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((out.x, v));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (theta, value) = best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Optimization("no hyperparameter restart succeeded".into()))
    })?;
    let ev = evidence(&rows, y, &theta, false)?;
    Ok(FitResult {
        hyperparams: KernelHyperparams::from_log_params(&theta, ev.mean_constant),
        log_evidence: value,
        initial_log_evidences: initial_values,
    })
}
