//! Acquisition policies and the one-call proposal step of a BO iteration.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{
    binoculars_select, EnoObjective, MultiStepObjective, TiedTreeObjective, TreeLayout, TreeVariables, VARIANCE_FLOOR,
};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::optim::{optimize_box, random_inits, warm_start_init, OptimizerConfig, WarmStartState};

/// Which acquisition function drives the search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// One-step expected improvement.
    Ei,
    /// Full `k`-step tree; `counts` overrides the default fantasy counts.
    MultiStep { horizon: usize, counts: Option<Vec<usize>> },
    /// `k`-step tree with a single fantasy (the mean) per stage.
    Path { horizon: usize },
    /// One fantasy stage followed by a non-adaptive batch of `k − 1` points.
    Eno { horizon: usize },
    /// Maximize q-EI over `q` points, then sample one by individual EI.
    Binoculars { q: usize },
}

impl Policy {
    /// Tree layout for the tree-shaped policies.
    pub fn layout(&self, dim: usize) -> Result<Option<TreeLayout>> {
        Ok(match self {
            Policy::Ei => Some(TreeLayout::one_step(dim)),
            Policy::MultiStep { horizon, counts: None } => Some(TreeLayout::multi_step(*horizon, dim)?),
            Policy::MultiStep {
                horizon,
                counts: Some(c),
            } => Some(TreeLayout::new(*horizon, c.clone(), dim, Default::default())?),
            Policy::Path { horizon } => Some(TreeLayout::path(*horizon, dim)?),
            Policy::Eno { .. } | Policy::Binoculars { .. } => None,
        })
    }

    /// Replaces the fantasy counts of a multi-step policy.
    pub fn with_counts(self, counts: Vec<usize>) -> Result<Self> {
        match self {
            Policy::MultiStep { horizon, .. } => {
                if counts.len() + 1 != horizon {
                    return Err(Error::Config(format!(
                        "{horizon}-step needs {} fantasy counts, got {}",
                        horizon - 1,
                        counts.len()
                    )));
                }
                Ok(Policy::MultiStep {
                    horizon,
                    counts: Some(counts),
                })
            }
            other => Err(Error::Config(format!("fantasy counts do not apply to policy `{other}`"))),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Ei => write!(f, "ei"),
            Policy::MultiStep { horizon, .. } => write!(f, "{horizon}-step"),
            Policy::Path { horizon } => write!(f, "{horizon}-path"),
            Policy::Eno { horizon } => write!(f, "{horizon}-eno"),
            Policy::Binoculars { q } => write!(f, "binoculars-{q}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "ei" {
            return Ok(Policy::Ei);
        }
        if let Some(q) = s.strip_prefix("binoculars-") {
            let q: usize = q.parse().map_err(|_| Error::Config(format!("bad batch size in policy `{s}`")))?;
            if q == 0 {
                return Err(Error::Config("binoculars batch size must be ≥ 1".into()));
            }
            return Ok(Policy::Binoculars { q });
        }
        let (k, kind) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("unknown policy `{s}`")))?;
        let horizon: usize = k.parse().map_err(|_| Error::Config(format!("unknown policy `{s}`")))?;
        if !(2..=4).contains(&horizon) {
            return Err(Error::Config(format!("policy `{s}`: horizon must be 2, 3 or 4")));
        }
        match kind {
            "step" => Ok(Policy::MultiStep { horizon, counts: None }),
            "path" => Ok(Policy::Path { horizon }),
            "eno" => Ok(Policy::Eno { horizon }),
            _ => Err(Error::Config(format!("unknown policy `{s}`"))),
        }
    }
}

/// Knobs of a single proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    pub optimizer: OptimizerConfig,
    /// First-stage Gauss–Hermite fantasies for ENO.
    pub eno_fantasies: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            eno_fantasies: 10,
        }
    }
}

/// Result of [`propose_next`].
#[derive(Debug, Clone)]
pub struct Proposal {
    /// Next point to evaluate, in `[0,1]^d`.
    pub point: Vec<f64>,
    pub value: f64,
    pub restart_values: Vec<Option<f64>>,
    pub wall_time_s: f64,
    /// Solved tree, for tree-shaped policies.
    pub tree: Option<TreeVariables>,
    /// First-level fantasized outcomes at the chosen root.
    pub fantasy_values: Vec<f64>,
    pub warm_started: bool,
    pub warm_fallback: bool,
}

/// Optimizes the policy's acquisition function on `model` and returns the
/// root of the best solution.
pub fn propose_next(
    model: &Arc<GpModel>,
    incumbent: f64,
    policy: &Policy,
    warm: Option<&WarmStartState>,
    cfg: &ProposalConfig,
    seed: u64,
) -> Result<Proposal> {
    cfg.optimizer.validate()?;
    let start = Instant::now();
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opt = &cfg.optimizer;

    if let Policy::Binoculars { q } = policy {
        let choice = binoculars_select(model, incumbent, *q, seed, opt)?;
        return Ok(Proposal {
            point: choice.point,
            value: choice.batch_value,
            restart_values: Vec::new(),
            wall_time_s: start.elapsed().as_secs_f64(),
            tree: None,
            fantasy_values: Vec::new(),
            warm_started: false,
            warm_fallback: false,
        });
    }

    if let Policy::Eno { horizon } = policy {
        let obj = EnoObjective::new(model.clone(), *horizon, cfg.eno_fantasies, incumbent, seed)?;
        let inits = random_inits(&obj, opt.restarts, opt.raw_samples, &mut rng)?;
        let sol = optimize_box(&obj, &inits, opt)?;
        let x = sol.x[..d].to_vec();
        let fantasy_values = first_stage_fantasies(model, &x, &obj.level.nodes);
        return Ok(Proposal {
            point: x,
            value: sol.value,
            restart_values: sol.restarts.iter().map(|r| r.as_ref().map(|r| r.value)).collect(),
            wall_time_s: start.elapsed().as_secs_f64(),
            tree: None,
            fantasy_values,
            warm_started: false,
            warm_fallback: false,
        });
    }

    let layout = policy.layout(d)?.expect("tree-shaped policy");
    let samples = layout.draw_base_samples(seed)?;
    let obj = MultiStepObjective::new(model.clone(), layout.clone(), samples, incumbent)?;
    let mut inits = Vec::with_capacity(opt.restarts);
    let mut warm_started = false;
    let mut warm_fallback = false;
    if let Some(state) = warm.filter(|_| layout.horizon() >= 2 && opt.warm_restarts > 0) {
        let ws = warm_start_init(state, opt.warm_restarts, &layout, seed ^ 0x0077_a211);
        warm_fallback = ws.fallback;
        warm_started = !ws.fallback;
        if !ws.fallback {
            inits.extend(ws.inits);
        }
    }
    if layout.counts().iter().any(|&m| m > 1) && opt.tied_restarts > 0 {
        inits.extend(tied_inits(&obj, opt, &mut rng)?);
    }
    let fresh = opt.restarts - inits.len();
    inits.extend(random_inits(&obj, fresh, opt.raw_samples, &mut rng)?);
    let sol = optimize_box(&obj, &inits, opt)?;
    let tree = TreeVariables::new(layout.clone(), sol.x.iter().map(|v| v.clamp(0.0, 1.0)).collect())?;
    let point = tree.root().to_vec();
    let fantasy_values = match obj.samples.levels.first() {
        Some(level) => first_stage_fantasies(model, &point, &level.nodes),
        None => Vec::new(),
    };
    Ok(Proposal {
        point,
        value: sol.value,
        restart_values: sol.restarts.iter().map(|r| r.as_ref().map(|r| r.value)).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
        tree: Some(tree),
        fantasy_values,
        warm_started,
        warm_fallback,
    })
}

/// Full trees expanded from separately optimized tied trees. Each tied
/// solution is feasible for the untied problem, so these starts are at
/// least as good as the best tied value.
fn tied_inits(obj: &MultiStepObjective, opt: &OptimizerConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let tied = TiedTreeObjective::new(obj.clone());
    let starts = random_inits(&tied, opt.tied_restarts, opt.raw_samples, rng)?;
    let sol = optimize_box(&tied, &starts, opt)?;
    Ok(starts
        .iter()
        .zip(&sol.restarts)
        .map(|(start, rec)| tied.expand(rec.as_ref().map_or(start, |r| &r.x)))
        .collect())
}

/// Noisy-posterior fantasies `μ(x) + √(σ²(x) + σ_n²) z_j`.
fn first_stage_fantasies(model: &GpModel, x: &[f64], nodes: &[f64]) -> Vec<f64> {
    let p = model.posterior_rows(&[x.to_vec()]);
    let s = (p.covariance[(0, 0)] + model.noise_variance()).max(VARIANCE_FLOOR).sqrt();
    nodes.iter().map(|z| p.mean[0] + s * z).collect()
}
