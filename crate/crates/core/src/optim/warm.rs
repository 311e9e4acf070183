//! Warm starts for tree optimization from the previous iteration's solution.
//!
//! The level-1 branch whose fantasized outcome is closest to what was
//! actually observed is promoted one level up: its sub-tree becomes the new
//! tree (with branch indices wrapped when the new tree is wider), and the
//! deepest level, which has no counterpart, is filled with uniform draws.
//! Restarts are then spread around the promoted tree by
//! `x = (1−γ_r)((1−η_i) x* + η_i β) + γ_r u` with `β ~ Beta(1,3)` and
//! `u ~ U[0,1]`, `γ` growing across restarts and `η` across levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::acquisition::TreeLayout;
use crate::error::{Error, Result};

/// Largest restart-level perturbation weight.
pub const GAMMA_MAX: f64 = 0.9;
/// Largest depth-level perturbation weight.
pub const ETA_MAX: f64 = 0.5;

/// What the previous iteration left behind.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStartState {
    pub layout: TreeLayout,
    /// Best tree found, flat node-major.
    pub solution: Vec<f64>,
    /// Fantasized outcomes of the first level, one per branch (same units as
    /// `observed`).
    pub fantasy_values: Vec<f64>,
    /// Outcome actually observed at the chosen root.
    pub observed: f64,
}

/// Random ingredients of one restart: `γ`, one `η` per tree level, and
/// `β`, `u` with one entry per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub gamma: f64,
    pub eta: Vec<f64>,
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub inits: Vec<Vec<f64>>,
    /// Set when the previous solution could not be mapped onto the layout
    /// and `inits` are plain uniform draws.
    pub fallback: bool,
    pub branch: Option<usize>,
}

/// `γ_r = 0.9 · r/(N−1)` for `r = 0..N`.
pub fn gamma_schedule(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0; n];
    }
    (0..n).map(|r| GAMMA_MAX * r as f64 / (n - 1) as f64).collect()
}

/// `η_i = 0.5 · i/(k−1)` for levels `i = 0..k`.
pub fn eta_schedule(horizon: usize) -> Vec<f64> {
    if horizon <= 1 {
        return vec![0.0; horizon];
    }
    (0..horizon).map(|i| ETA_MAX * i as f64 / (horizon - 1) as f64).collect()
}

/// Branch whose fantasy is nearest to the observation (lowest index on
/// ties).
pub fn nearest_branch(values: &[f64], observed: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in values.iter().enumerate() {
        let dist = (v - observed).abs();
        if best.is_none_or(|(_, b)| dist < b) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

fn compatible(state: &WarmStartState, layout: &TreeLayout) -> bool {
    state.layout.dim() == layout.dim()
        && state.layout.horizon() >= 2
        && state.solution.len() == state.layout.num_variables()
        && state.fantasy_values.len() == state.layout.counts()[0]
        && state.observed.is_finite()
}

/// Promoted previous sub-tree laid out for `layout`; nodes without a
/// counterpart take their coordinates from `fill` (same length as the
/// result).
pub fn promote_subtree(state: &WarmStartState, layout: &TreeLayout, fill: &[f64]) -> Result<(Vec<f64>, usize)> {
    if !compatible(state, layout) {
        return Err(Error::InvalidArgument("previous solution does not map onto this layout".into()));
    }
    if fill.len() != layout.num_variables() {
        return Err(Error::DimensionMismatch {
            expected: layout.num_variables(),
            got: fill.len(),
        });
    }
    let branch = nearest_branch(&state.fantasy_values, state.observed).expect("at least one branch");
    let prev = &state.layout;
    let d = layout.dim();
    let mut out = fill.to_vec();
    for node in 0..layout.num_nodes() {
        let path = layout.node_path(node);
        let t = path.len();
        if t + 1 >= prev.horizon() {
            continue;
        }
        let mut prev_path = Vec::with_capacity(t + 1);
        prev_path.push(branch);
        for (i, &j) in path.iter().enumerate() {
            prev_path.push(j % prev.counts()[i + 1]);
        }
        let src = prev.node_index(&prev_path)?;
        out[node * d..(node + 1) * d].copy_from_slice(&state.solution[src * d..(src + 1) * d]);
    }
    Ok((out, branch))
}

/// Applies the perturbation formula to a promoted tree.
pub fn perturb(promoted: &[f64], layout: &TreeLayout, p: &Perturbation) -> Result<Vec<f64>> {
    let n = layout.num_variables();
    if promoted.len() != n || p.beta.len() != n || p.u.len() != n || p.eta.len() != layout.horizon() {
        return Err(Error::Shape("perturbation does not match the layout".into()));
    }
    let d = layout.dim();
    let starts = layout.level_starts();
    let mut out = Vec::with_capacity(n);
    for (idx, &xs) in promoted.iter().enumerate() {
        let node = idx / d;
        let level = starts.iter().rposition(|&s| s <= node).expect("node has a level");
        let eta = p.eta[level];
        let v = (1.0 - p.gamma) * ((1.0 - eta) * xs + eta * p.beta[idx]) + p.gamma * p.u[idx];
        out.push(v.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// `n` warm-started inits for `layout`, deterministic in `seed`.
pub fn warm_start_init(state: &WarmStartState, n: usize, layout: &TreeLayout, seed: u64) -> WarmStart {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = layout.num_variables();
    let fill: Vec<f64> = (0..nv).map(|_| rng.random()).collect();
    let Ok((promoted, branch)) = promote_subtree(state, layout, &fill) else {
        let inits = (0..n).map(|_| (0..nv).map(|_| rng.random()).collect()).collect();
        return WarmStart {
            inits,
            fallback: true,
            branch: None,
        };
    };
    let beta_dist = Beta::new(1.0, 3.0).expect("valid Beta parameters");
    let eta = eta_schedule(layout.horizon());
    let inits = gamma_schedule(n)
        .into_iter()
        .map(|gamma| {
            let p = Perturbation {
                gamma,
                eta: eta.clone(),
                beta: (0..nv).map(|_| beta_dist.sample(&mut rng)).collect(),
                u: (0..nv).map(|_| rng.random()).collect(),
            };
            perturb(&promoted, layout, &p).expect("shapes built from the layout")
        })
        .collect();
    WarmStart {
        inits,
        fallback: false,
        branch: Some(branch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::SampleMode;

    fn state() -> WarmStartState {
        let layout = TreeLayout::new(3, vec![2, 2], 1, SampleMode::GaussHermite).unwrap();
        // nodes: root, level1 [a, b], level2 [aa, ab, ba, bb]
        WarmStartState {
            layout,
            solution: vec![0.5, 0.1, 0.2, 0.11, 0.12, 0.21, 0.22],
            fantasy_values: vec![-1.0, 2.0],
            observed: 1.2,
        }
    }

    #[test]
    fn promotes_nearest_branch() {
        let s = state();
        let fill = vec![0.99; 7];
        let (tree, branch) = promote_subtree(&s, &s.layout, &fill).unwrap();
        assert_eq!(branch, 1);
        // new root = old node b, new level 1 = old [ba, bb], deepest filled
        assert_eq!(tree, vec![0.2, 0.21, 0.22, 0.99, 0.99, 0.99, 0.99]);
    }

    #[test]
    fn ties_go_to_lowest_branch() {
        assert_eq!(nearest_branch(&[0.0, 2.0], 1.0), Some(0));
    }

    #[test]
    fn zero_perturbation_reuses_tree() {
        let s = state();
        let (tree, _) = promote_subtree(&s, &s.layout, &[0.3; 7]).unwrap();
        let p = Perturbation {
            gamma: 0.0,
            eta: vec![0.0; 3],
            beta: vec![0.7; 7],
            u: vec![0.4; 7],
        };
        assert_eq!(perturb(&tree, &s.layout, &p).unwrap(), tree);
        let p = Perturbation { gamma: 1.0, ..p };
        assert_eq!(perturb(&tree, &s.layout, &p).unwrap(), vec![0.4; 7]);
    }

    #[test]
    fn schedules_are_linear() {
        assert_eq!(gamma_schedule(1), vec![0.0]);
        let g = gamma_schedule(4);
        assert!((g[3] - 0.9).abs() < 1e-15 && (g[1] - 0.3).abs() < 1e-15);
        assert_eq!(eta_schedule(3), vec![0.0, 0.25, 0.5]);
    }

    #[test]
    fn incompatible_layout_falls_back() {
        let s = state();
        let other = TreeLayout::new(3, vec![2, 2], 2, SampleMode::GaussHermite).unwrap();
        let w = warm_start_init(&s, 3, &other, 0);
        assert!(w.fallback);
        assert_eq!(w.inits.len(), 3);
        let w = warm_start_init(&s, 5, &s.layout, 0);
        assert!(!w.fallback);
        assert!(w.inits.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(w, warm_start_init(&s, 5, &s.layout, 0));
    }
}
