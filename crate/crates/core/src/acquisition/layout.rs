//! Shape of the lookahead tree and the flat decision-variable vector.

use crate::error::{Error, Result};
use crate::quadrature::{BaseSampleTree, SampleMode};

/// Fantasy counts used for the full multi-step tree, truncated to `k − 1`.
pub const DEFAULT_FANTASY_COUNTS: [usize; 3] = [10, 5, 3];

/// Horizon `k` and branching factors `m_1..m_{k−1}` of a scenario tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeLayout {
    horizon: usize,
    counts: Vec<usize>,
    dim: usize,
    mode: SampleMode,
}

impl TreeLayout {
    pub fn new(horizon: usize, counts: Vec<usize>, dim: usize, mode: SampleMode) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be ≥ 1".into()));
        }
        if counts.len() + 1 != horizon {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} needs {} fantasy counts, got {}",
                horizon - 1,
                counts.len()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("fantasy counts must be ≥ 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be ≥ 1".into()));
        }
        Ok(Self {
            horizon,
            counts,
            dim,
            mode,
        })
    }

    /// One-step layout (plain expected improvement).
    pub fn one_step(dim: usize) -> Self {
        Self::new(1, Vec::new(), dim, SampleMode::GaussHermite).expect("valid layout")
    }

    /// Full tree with the default Gauss–Hermite counts.
    pub fn multi_step(horizon: usize, dim: usize) -> Result<Self> {
        if horizon > DEFAULT_FANTASY_COUNTS.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "no default fantasy counts for horizon {horizon}"
            )));
        }
        let counts = DEFAULT_FANTASY_COUNTS[..horizon.saturating_sub(1)].to_vec();
        Self::new(horizon, counts, dim, SampleMode::GaussHermite)
    }

    /// Single-path tree: one Gauss–Hermite sample (the mean) per stage.
    pub fn path(horizon: usize, dim: usize) -> Result<Self> {
        Self::new(horizon, vec![1; horizon.saturating_sub(1)], dim, SampleMode::GaussHermite)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> SampleMode {
        self.mode
    }

    /// Nodes per level: `1, m_1, m_1 m_2, …` (length `k`).
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.horizon);
        let mut n = 1;
        sizes.push(n);
        for &m in &self.counts {
            n *= m;
            sizes.push(n);
        }
        sizes
    }

    /// Index of the first node of each level in the flattened node list.
    pub fn level_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.horizon);
        let mut acc = 0;
        for s in self.level_sizes() {
            starts.push(acc);
            acc += s;
        }
        starts
    }

    pub fn num_nodes(&self) -> usize {
        self.level_sizes().iter().sum()
    }

    /// `d · (1 + Σ_t Π_{i≤t} m_i)`.
    pub fn num_variables(&self) -> usize {
        self.dim * self.num_nodes()
    }

    /// Level and within-level index of flattened node `node`.
    pub fn locate(&self, node: usize) -> (usize, usize) {
        let mut rem = node;
        for (level, size) in self.level_sizes().into_iter().enumerate() {
            if rem < size {
                return (level, rem);
            }
            rem -= size;
        }
        panic!("node {node} out of range");
    }

    /// Flattened index of the node reached by the branch choices `path`
    /// (`path[t]` picks one of the `m_{t+1}` children).
    pub fn node_index(&self, path: &[usize]) -> Result<usize> {
        if path.len() >= self.horizon {
            return Err(Error::InvalidArgument(format!(
                "path of length {} in a tree of horizon {}",
                path.len(),
                self.horizon
            )));
        }
        let mut within = 0;
        for (t, &j) in path.iter().enumerate() {
            if j >= self.counts[t] {
                return Err(Error::InvalidArgument(format!(
                    "branch {j} at level {} exceeds fantasy count {}",
                    t + 1,
                    self.counts[t]
                )));
            }
            within = within * self.counts[t] + j;
        }
        Ok(self.level_starts()[path.len()] + within)
    }

    /// Branch choices leading to flattened node `node`.
    pub fn node_path(&self, node: usize) -> Vec<usize> {
        let (level, mut within) = self.locate(node);
        let mut path = vec![0; level];
        for t in (0..level).rev() {
            path[t] = within % self.counts[t];
            within /= self.counts[t];
        }
        path
    }

    /// Base samples matching this layout's counts and sampling mode.
    pub fn draw_base_samples(&self, seed: u64) -> Result<BaseSampleTree> {
        BaseSampleTree::draw(&self.counts, self.mode, seed)
    }

    pub(crate) fn check_samples(&self, samples: &BaseSampleTree) -> Result<()> {
        if samples.counts() != self.counts {
            return Err(Error::Shape(format!(
                "base samples have counts {:?}, layout expects {:?}",
                samples.counts(),
                self.counts
            )));
        }
        Ok(())
    }
}

/// Base samples for `layout` in the given mode (Gauss–Hermite ignores the
/// seed).
pub fn draw_base_samples(layout: &TreeLayout, mode: SampleMode, seed: u64) -> Result<BaseSampleTree> {
    BaseSampleTree::draw(layout.counts(), mode, seed)
}

/// Decision variables of the one-shot problem: one point per tree node,
/// stored node-major in a flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeVariables {
    layout: TreeLayout,
    flat: Vec<f64>,
}

impl TreeVariables {
    pub fn new(layout: TreeLayout, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != layout.num_variables() {
            return Err(Error::DimensionMismatch {
                expected: layout.num_variables(),
                got: flat.len(),
            });
        }
        if flat.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("tree variables must lie in [0,1]".into()));
        }
        Ok(Self { layout, flat })
    }

    pub fn layout(&self) -> &TreeLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    /// Point stored for flattened node `node`.
    pub fn node(&self, node: usize) -> &[f64] {
        let d = self.layout.dim;
        &self.flat[node * d..(node + 1) * d]
    }

    /// Point stored for the node reached by `path`.
    pub fn node_at(&self, path: &[usize]) -> Result<&[f64]> {
        Ok(self.node(self.layout.node_index(path)?))
    }

    /// Root decision `x`.
    pub fn root(&self) -> &[f64] {
        self.node(0)
    }
}

/// The root point of a solved tree: by the one-shot equivalence its
/// coordinate is the candidate to evaluate next.
pub fn extract_candidate(vars: &TreeVariables) -> Vec<f64> {
    vars.root().to_vec()
}
