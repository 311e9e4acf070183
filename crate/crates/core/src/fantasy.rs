//! Fantasy models: GP posteriors conditioned on sampled outcomes, updated
//! incrementally from the parent's root cache.
//!
//! Appending `q` points to a model whose noisy kernel matrix has root `R`
//! (`n×r`) and pseudoinverse `R⁺` extends the root to
//! `[[R, 0], [L12, L22]]` with `L12ᵀ = R⁺U` and `L22 L22ᵀ = S − L12 L12ᵀ`,
//! where `U` is the cross-covariance to the new points and `S` their noisy
//! covariance. The new pseudoinverse rows are `[−L22⁻¹L12 R⁺ | L22⁻¹]`; we
//! store the `q×(r+q)` block `P = [−L22⁻¹L12 | L22⁻¹]` acting on whitened
//! coordinates `[R⁺v; v_new]`, so nothing of size `n` is copied.
//!
//! A [`FantasyModel`] adds one batch dimension: each branch of the parent is
//! split into `m` children that share the new locations (and hence the
//! update blocks) but differ in the fantasized outcomes. Branch indices are
//! flattened root-to-leaf, so child `j` of parent branch `b` is `b·m + j`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{kernel, GpModel, Posterior};
use crate::linalg;

/// Blocks that extend a root decomposition by `q` rows.
#[derive(Debug, Clone)]
pub struct CacheUpdateBlocks {
    /// `q×r`
    pub l12: DMatrix<f64>,
    /// `q×q`, lower triangular with a positive diagonal.
    pub l22: DMatrix<f64>,
    /// `q×(r+q)` pseudoinverse rows in whitened coordinates.
    pub p: DMatrix<f64>,
    /// Largest shift applied to the Schur complement before decomposing it
    /// (0 when it factored directly).
    pub jitter: f64,
}

impl CacheUpdateBlocks {
    /// Blocks from `L12ᵀ = R⁺U` and `S`. A Schur complement that does not
    /// factor (possible with rank-reduced roots) has its spectrum clamped
    /// at `floor`, or at `1e-6 · mean|diag S|` when that is larger.
    fn from_whitened(l12t: DMatrix<f64>, s: &DMatrix<f64>, floor: f64) -> Result<Self> {
        let q = s.nrows();
        let r = l12t.nrows();
        let l12 = l12t.transpose();
        let mut schur = s - &l12 * &l12t;
        // symmetrize to remove rounding asymmetry before decomposing
        for i in 0..q {
            for j in 0..i {
                let v = 0.5 * (schur[(i, j)] + schur[(j, i)]);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        if schur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Schur complement".into()));
        }
        let f = match schur.clone().cholesky() {
            Some(c) => linalg::JitteredFactor {
                lower: c.unpack(),
                jitter: 0.0,
            },
            None => {
                let mean_diag = s.diagonal().iter().map(|v| v.abs()).sum::<f64>() / q as f64;
                let fl = floor.max(linalg::JITTER_FLOOR * mean_diag);
                let eig = schur.symmetric_eigen();
                let shift = eig.eigenvalues.iter().map(|v| (fl - v).max(0.0)).fold(0.0, f64::max);
                let clamped = eig.eigenvalues.map(|v| v.max(fl));
                let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
                let mut f = linalg::jittered_cholesky(&rebuilt).map_err(|e| match e {
                    Error::Decomposition(msg) => Error::Decomposition(format!("Schur complement: {msg}")),
                    other => other,
                })?;
                f.jitter += shift;
                f
            }
        };
        let l22inv = linalg::lower_inverse(&f.lower)?;
        let mut p = DMatrix::zeros(q, r + q);
        p.view_mut((0, 0), (q, r)).copy_from(&(-&l22inv * &l12));
        p.view_mut((0, r), (q, q)).copy_from(&l22inv);
        Ok(Self {
            l12,
            l22: f.lower,
            p,
            jitter: f.jitter,
        })
    }

    pub fn q(&self) -> usize {
        self.l22.nrows()
    }

    /// Rank of the root being extended.
    pub fn parent_rank(&self) -> usize {
        self.l12.ncols()
    }

    /// Applies `P` to whitened parent coordinates `a` (`r×c`) and raw new
    /// coordinates `v` (`q×c`).
    pub fn apply(&self, a: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.parent_rank();
        let q = self.q();
        self.p.view((0, 0), (q, r)) * a + self.p.view((0, r), (q, q)) * v
    }

    /// Full `(r+q)×(n+q)` pseudoinverse of the augmented root, given `R⁺`.
    pub fn augmented_pinv(&self, root_pinv: &DMatrix<f64>) -> DMatrix<f64> {
        let (r, n) = root_pinv.shape();
        let q = self.q();
        let mut out = DMatrix::zeros(r + q, n + q);
        out.view_mut((0, 0), (r, n)).copy_from(root_pinv);
        let left = self.p.view((0, 0), (q, r)) * root_pinv;
        out.view_mut((r, 0), (q, n)).copy_from(&left);
        out.view_mut((r, n), (q, q)).copy_from(&self.p.view((0, r), (q, q)));
        out
    }

    /// Full augmented root `[[R, 0], [L12, L22]]`.
    pub fn augmented_root(&self, root: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, r) = root.shape();
        let q = self.q();
        let mut out = DMatrix::zeros(n + q, r + q);
        out.view_mut((0, 0), (n, r)).copy_from(root);
        out.view_mut((n, 0), (q, r)).copy_from(&self.l12);
        out.view_mut((n, r), (q, q)).copy_from(&self.l22);
        out
    }
}

/// Extends a root decomposition `R` (with pseudoinverse `R⁺`) of `K̃` to one
/// of `[[K̃, U], [Uᵀ, S]]`. Takes `O(nrq)` time plus `O(q³)`.
pub fn update_root_cache(
    root: &DMatrix<f64>,
    root_pinv: &DMatrix<f64>,
    u: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<CacheUpdateBlocks> {
    let (n, r) = root.shape();
    if root_pinv.shape() != (r, n) {
        return Err(Error::Shape(format!(
            "pseudoinverse is {:?}, expected {:?}",
            root_pinv.shape(),
            (r, n)
        )));
    }
    if u.nrows() != n || !s.is_square() || s.nrows() != u.ncols() {
        return Err(Error::Shape(format!(
            "U is {:?} and S is {:?} for a root with {n} rows",
            u.shape(),
            s.shape()
        )));
    }
    CacheUpdateBlocks::from_whitened(root_pinv * u, s, 0.0)
}

/// Model a fantasy level is conditioned on.
#[derive(Debug, Clone)]
pub enum Parent {
    Base(Arc<GpModel>),
    Fantasy(Arc<FantasyModel>),
}

impl From<Arc<GpModel>> for Parent {
    fn from(m: Arc<GpModel>) -> Self {
        Parent::Base(m)
    }
}

impl From<Arc<FantasyModel>> for Parent {
    fn from(m: Arc<FantasyModel>) -> Self {
        Parent::Fantasy(m)
    }
}

impl Parent {
    pub fn base(&self) -> &Arc<GpModel> {
        match self {
            Parent::Base(m) => m,
            Parent::Fantasy(f) => &f.base,
        }
    }

    pub fn num_branches(&self) -> usize {
        match self {
            Parent::Base(_) => 1,
            Parent::Fantasy(f) => f.num_branches(),
        }
    }

    /// Rank of the (augmented) root.
    pub fn rank(&self) -> usize {
        match self {
            Parent::Base(m) => m.rank(),
            Parent::Fantasy(f) => f.rank,
        }
    }

    pub fn batch_shape(&self) -> Vec<usize> {
        match self {
            Parent::Base(_) => Vec::new(),
            Parent::Fantasy(f) => f.batch_shape.clone(),
        }
    }

    fn whiten(&self, branch: usize, points: &[Vec<f64>]) -> DMatrix<f64> {
        match self {
            Parent::Base(m) => m.whitened_cross(points),
            Parent::Fantasy(f) => f.whiten(branch, points),
        }
    }

    fn whitened_outcomes(&self, branch: usize) -> &DVector<f64> {
        match self {
            Parent::Base(m) => m.whitened(),
            Parent::Fantasy(f) => &f.betas[branch],
        }
    }

    fn stored_entries(&self) -> usize {
        match self {
            Parent::Base(m) => m.root_pinv().len(),
            Parent::Fantasy(f) => f.stored_entries(),
        }
    }

    fn path_data(&self, branch: usize, xs: &mut Vec<Vec<f64>>, ys: &mut Vec<f64>) {
        match self {
            Parent::Base(m) => {
                xs.extend(m.train_rows().iter().cloned());
                ys.extend(m.dataset().outcomes().iter());
            }
            Parent::Fantasy(f) => f.collect_path(branch, xs, ys),
        }
    }
}

/// One level of fantasized observations on top of a parent model.
#[derive(Debug, Clone)]
pub struct FantasyModel {
    parent: Parent,
    base: Arc<GpModel>,
    /// Branching factor of every level, root to leaf.
    batch_shape: Vec<usize>,
    /// Locations per parent branch (`q` rows each).
    locations: Vec<Vec<Vec<f64>>>,
    /// Update blocks per parent branch, shared by its `m` children.
    blocks: Vec<CacheUpdateBlocks>,
    /// `branches × q` fantasized outcomes.
    outcomes: DMatrix<f64>,
    /// Whitened residuals `R_aug⁺ (y − c)` per branch.
    betas: Vec<DVector<f64>>,
    rank: usize,
}

impl FantasyModel {
    /// Conditions every branch of `parent` on `m` outcome vectors at new
    /// locations.
    ///
    /// `locations` holds either one `q×d` matrix shared by all parent
    /// branches or one per parent branch. `outcomes` has
    /// `parent_branches · m` rows (child `j` of branch `b` at row `b·m + j`)
    /// and `q` columns.
    pub fn fantasize(
        parent: impl Into<Parent>,
        locations: &[DMatrix<f64>],
        outcomes: &DMatrix<f64>,
    ) -> Result<Self> {
        let parent = parent.into();
        let base = parent.base().clone();
        let d = base.dim();
        let pb = parent.num_branches();
        if locations.len() != 1 && locations.len() != pb {
            return Err(Error::Shape(format!(
                "{} location sets for {pb} parent branches",
                locations.len()
            )));
        }
        let q = locations[0].nrows();
        for loc in locations {
            if loc.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: loc.ncols(),
                });
            }
            if loc.nrows() != q {
                return Err(Error::Shape("location sets differ in size".into()));
            }
            if loc.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument("fantasy locations must lie in the unit cube".into()));
            }
        }
        if q == 0 {
            return Err(Error::InvalidArgument("fantasize needs at least one location".into()));
        }
        if outcomes.ncols() != q || outcomes.nrows() == 0 || !outcomes.nrows().is_multiple_of(pb) {
            return Err(Error::Shape(format!(
                "outcomes are {}x{}, expected (m·{pb})x{q}",
                outcomes.nrows(),
                outcomes.ncols()
            )));
        }
        if outcomes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fantasy outcomes".into()));
        }
        let m = outcomes.nrows() / pb;
        let hp = base.hyperparams();
        let c = hp.mean_constant;
        let r_prev = parent.rank();

        let mut locs = Vec::with_capacity(pb);
        let mut blocks = Vec::with_capacity(pb);
        let mut betas = Vec::with_capacity(pb * m);
        for b in 0..pb {
            let loc = kernel::rows(&locations[if locations.len() == 1 { 0 } else { b }]);
            let l12t = parent.whiten(b, &loc);
            let mut s = kernel::kernel_matrix_rows(&loc, &loc, hp);
            for i in 0..q {
                s[(i, i)] += hp.noise_variance;
            }
            let blk = CacheUpdateBlocks::from_whitened(l12t, &s, hp.noise_variance)?;
            let beta_parent = parent.whitened_outcomes(b);
            for j in 0..m {
                let row = b * m + j;
                let resid = DMatrix::from_fn(q, 1, |i, _| outcomes[(row, i)] - c);
                let a = DMatrix::from_column_slice(r_prev, 1, beta_parent.as_slice());
                let ext = blk.apply(&a, &resid);
                let mut beta = DVector::zeros(r_prev + q);
                beta.rows_mut(0, r_prev).copy_from(beta_parent);
                beta.rows_mut(r_prev, q).copy_from(&ext.column(0));
                betas.push(beta);
            }
            locs.push(loc);
            blocks.push(blk);
        }
        let mut batch_shape = parent.batch_shape();
        batch_shape.push(m);
        Ok(Self {
            parent,
            base,
            batch_shape,
            locations: locs,
            blocks,
            outcomes: outcomes.clone(),
            betas,
            rank: r_prev + q,
        })
    }

    pub fn base(&self) -> &Arc<GpModel> {
        &self.base
    }

    pub fn parent(&self) -> &Parent {
        &self.parent
    }

    pub fn batch_shape(&self) -> &[usize] {
        &self.batch_shape
    }

    pub fn depth(&self) -> usize {
        self.batch_shape.len()
    }

    /// Number of leaf branches (product of the batch shape).
    pub fn num_branches(&self) -> usize {
        self.betas.len()
    }

    /// Fantasies per parent branch at this level.
    pub fn fantasies_per_branch(&self) -> usize {
        *self.batch_shape.last().expect("fantasy model has at least one level")
    }

    pub fn q(&self) -> usize {
        self.outcomes.ncols()
    }

    /// Rank of the augmented root.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn update_blocks(&self) -> &[CacheUpdateBlocks] {
        &self.blocks
    }

    pub fn outcomes(&self) -> &DMatrix<f64> {
        &self.outcomes
    }

    /// Index of `branch`'s parent branch.
    pub fn parent_branch(&self, branch: usize) -> usize {
        branch / self.fantasies_per_branch()
    }

    fn whiten(&self, branch: usize, points: &[Vec<f64>]) -> DMatrix<f64> {
        let pb = self.parent_branch(branch);
        let a = self.parent.whiten(pb, points);
        let v = kernel::kernel_matrix_rows(&self.locations[pb], points, self.base.hyperparams());
        let ext = self.blocks[pb].apply(&a, &v);
        let mut out = a.insert_rows(self.rank - ext.nrows(), ext.nrows(), 0.0);
        out.view_mut((self.rank - ext.nrows(), 0), ext.shape()).copy_from(&ext);
        out
    }

    fn check_branch(&self, branch: usize) -> Result<()> {
        if branch >= self.num_branches() {
            return Err(Error::InvalidArgument(format!(
                "branch {branch} out of range ({} branches)",
                self.num_branches()
            )));
        }
        Ok(())
    }

    /// Latent posterior of one branch at the rows of `points`.
    pub fn posterior(&self, branch: usize, points: &DMatrix<f64>) -> Result<Posterior> {
        self.check_branch(branch)?;
        if points.ncols() != self.base.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.base.dim(),
                got: points.ncols(),
            });
        }
        Ok(self.posterior_rows(branch, &kernel::rows(points)))
    }

    pub(crate) fn posterior_rows(&self, branch: usize, prow: &[Vec<f64>]) -> Posterior {
        let hp = self.base.hyperparams();
        let a = self.whiten(branch, prow);
        let mean = a.tr_mul(&self.betas[branch]).add_scalar(hp.mean_constant);
        let covariance = kernel::kernel_matrix_rows(prow, prow, hp) - a.tr_mul(&a);
        Posterior { mean, covariance }
    }

    /// Posteriors of every branch, each at its own query rows. Siblings
    /// share the whitened cross-covariance when their queries coincide.
    pub fn posterior_all(&self, points: &[DMatrix<f64>]) -> Result<Vec<Posterior>> {
        if points.len() != self.num_branches() {
            return Err(Error::Shape(format!(
                "{} query sets for {} branches",
                points.len(),
                self.num_branches()
            )));
        }
        let d = self.base.dim();
        if let Some(bad) = points.iter().find(|p| p.ncols() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.ncols() });
        }
        let hp = self.base.hyperparams();
        let mut out: Vec<Posterior> = Vec::with_capacity(points.len());
        let mut shared: Option<(usize, usize, DMatrix<f64>, DMatrix<f64>)> = None;
        for (b, p) in points.iter().enumerate() {
            let pb = self.parent_branch(b);
            let reuse = matches!(&shared, Some((sb, prev, _, _)) if *sb == pb && points[*prev] == *p);
            if !reuse {
                let prow = kernel::rows(p);
                let a = self.whiten(b, &prow);
                let cov = kernel::kernel_matrix_rows(&prow, &prow, hp) - a.tr_mul(&a);
                shared = Some((pb, b, a, cov));
            }
            let (_, _, a, cov) = shared.as_ref().expect("set above");
            out.push(Posterior {
                mean: a.tr_mul(&self.betas[b]).add_scalar(hp.mean_constant),
                covariance: cov.clone(),
            });
        }
        Ok(out)
    }

    /// Entries held by the pseudoinverse caches along the whole chain:
    /// the base `R⁺` once plus one `P` block per parent branch per level.
    pub fn stored_entries(&self) -> usize {
        self.parent.stored_entries() + self.blocks.iter().map(|b| b.p.len()).sum::<usize>()
    }

    fn collect_path(&self, branch: usize, xs: &mut Vec<Vec<f64>>, ys: &mut Vec<f64>) {
        let pb = self.parent_branch(branch);
        self.parent.path_data(pb, xs, ys);
        xs.extend(self.locations[pb].iter().cloned());
        ys.extend(self.outcomes.row(branch).iter());
    }

    /// Real and fantasized observations along the path to `branch`.
    pub fn path_data(&self, branch: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        self.check_branch(branch)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        self.collect_path(branch, &mut xs, &mut ys);
        Ok((xs, ys))
    }
}

/// Entry counts `(N_naive, N_FF)` of the pseudoinverse caches for `k`
/// fantasy levels with batch sizes `q[t]` and branching factors `m[t]`,
/// starting from an `n`-point model with a rank-`r` root.
pub fn cache_size_accounting(n: usize, r: usize, q: &[usize], m: &[usize]) -> Result<(u128, u128)> {
    if q.len() != m.len() || q.is_empty() {
        return Err(Error::InvalidArgument(
            "need one batch size and one fantasy count per level".into(),
        ));
    }
    let (n, r) = (n as u128, r as u128);
    let mut naive = n * r;
    let mut fast = n * r;
    let mut parents: u128 = 1;
    let mut added: u128 = 0;
    for (&qt, &mt) in q.iter().zip(m) {
        let (qt, mt) = (qt as u128, mt as u128);
        added += qt;
        fast += parents * qt * (r + added);
        parents *= mt;
        naive += parents * (n + added) * (r + added);
    }
    if added == 0 {
        naive = n * r;
    }
    Ok((naive, fast))
}

/// From-scratch conditioning of every branch, used as the reference path.
///
/// Each leaf branch gets its own exact decomposition of the full
/// `(n + Σq)`-point noisy kernel matrix; `stored_entries` counts the
/// pseudoinverse entries of every intermediate and leaf model.
pub struct NaiveFantasies {
    pub models: Vec<GpModel>,
    pub stored_entries: usize,
}

impl NaiveFantasies {
    /// Conditions every branch of `fantasy` from scratch.
    pub fn condition(fantasy: &FantasyModel) -> Result<Self> {
        let base = fantasy.base();
        let mut stored = base.root_pinv().len();
        // intermediate levels also hold one model per branch
        let mut level: Option<&FantasyModel> = Some(fantasy);
        let mut chain = Vec::new();
        while let Some(f) = level {
            chain.push(f);
            level = match f.parent() {
                Parent::Fantasy(p) => Some(p.as_ref()),
                Parent::Base(_) => None,
            };
        }
        for f in chain.iter().skip(1) {
            for b in 0..f.num_branches() {
                let (xs, _) = f.path_data(b)?;
                stored += xs.len() * xs.len();
            }
        }
        let mut models = Vec::with_capacity(fantasy.num_branches());
        for b in 0..fantasy.num_branches() {
            let (xs, ys) = fantasy.path_data(b)?;
            let data = crate::gp::Dataset::from_rows(&xs, &ys)?;
            let model = GpModel::new(data, base.hyperparams().clone())?;
            stored += model.root_pinv().len();
            models.push(model);
        }
        Ok(Self {
            models,
            stored_entries: stored,
        })
    }
}
