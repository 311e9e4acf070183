//! Gaussian-process surrogate with a cached root decomposition.

mod fit;
pub mod kernel;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub use fit::{fit_hyperparameters, log_evidence, FitBounds, FitConfig, FitResult};
pub use kernel::{kernel_eval, kernel_matrix};

/// Observations in the unit-normalized domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    outcomes: DVector<f64>,
}

impl Dataset {
    /// Builds a dataset, checking that inputs lie in `[0,1]^d` and outcomes
    /// are finite.
    pub fn new(inputs: DMatrix<f64>, outcomes: DVector<f64>) -> Result<Self> {
        if inputs.nrows() != outcomes.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                got: outcomes.len(),
            });
        }
        if inputs.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "dataset inputs must lie in the unit cube".into(),
            ));
        }
        if outcomes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset outcomes".into()));
        }
        Ok(Self { inputs, outcomes })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            inputs: DMatrix::zeros(0, dim),
            outcomes: DVector::zeros(0),
        }
    }

    /// Builds a dataset from row slices.
    pub fn from_rows(points: &[Vec<f64>], outcomes: &[f64]) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Shape("ragged input rows".into()));
        }
        let inputs = DMatrix::from_fn(points.len(), d, |i, j| points[i][j]);
        Self::new(inputs, DVector::from_column_slice(outcomes))
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outcomes(&self) -> &DVector<f64> {
        &self.outcomes
    }

    /// Appends one observation.
    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("point outside the unit cube".into()));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("outcome".into()));
        }
        let n = self.len();
        let d = self.dim();
        let mut inputs = self.inputs.clone().insert_row(n, 0.0);
        for j in 0..d {
            inputs[(n, j)] = x[j];
        }
        self.inputs = inputs;
        self.outcomes = self.outcomes.clone().insert_row(n, y);
        Ok(())
    }

    /// Best outcome observed so far.
    pub fn incumbent(&self) -> Option<f64> {
        self.outcomes.iter().copied().reduce(f64::max)
    }

    /// Same inputs with outcomes replaced.
    pub fn with_outcomes(&self, outcomes: DVector<f64>) -> Result<Self> {
        Self::new(self.inputs.clone(), outcomes)
    }
}

/// Matérn 5/2 ARD kernel parameters, noise variance and constant mean.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub mean_constant: f64,
}

impl KernelHyperparams {
    pub fn new(
        lengthscales: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
        mean_constant: f64,
    ) -> Result<Self> {
        let hp = Self {
            lengthscales,
            signal_variance,
            noise_variance,
            mean_constant,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidHyperparameters(format!(
                "lengthscales must be positive, got {:?}",
                self.lengthscales
            )));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::InvalidHyperparameters(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidHyperparameters(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        if !self.mean_constant.is_finite() {
            return Err(Error::InvalidHyperparameters("mean constant".into()));
        }
        Ok(())
    }

    /// `[log ℓ_1..log ℓ_d, log σ_f², log σ_n²]`.
    pub fn to_log_params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log_params(theta: &[f64], mean_constant: f64) -> Self {
        let d = theta.len() - 2;
        Self {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: theta[d + 1].exp(),
            mean_constant,
        }
    }
}

/// Which root of `K_XX + σ²I` the model caches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootKind {
    /// Full lower-triangular Cholesky factor (`r = n`).
    #[default]
    Exact,
    /// Pivoted Cholesky truncated to the given rank.
    Pivoted { rank: usize },
}

/// Predictive distribution of the latent function at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Posterior of the noisy observation: adds `noise` to the diagonal.
    pub fn with_noise(&self, noise: f64) -> Self {
        let mut covariance = self.covariance.clone();
        for i in 0..covariance.nrows() {
            covariance[(i, i)] += noise;
        }
        Self {
            mean: self.mean.clone(),
            covariance,
        }
    }

    /// Marginal standard deviations, clamping tiny negative variances at 0.
    pub fn std_devs(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Fitted surrogate: data, hyperparameters and the cached root `R`
/// (`R Rᵀ = K_XX + σ²I`) with its pseudoinverse.
#[derive(Debug, Clone)]
pub struct GpModel {
    dataset: Dataset,
    hyperparams: KernelHyperparams,
    root: DMatrix<f64>,
    root_pinv: DMatrix<f64>,
    jitter: f64,
    /// `R⁺ (y − c)`, the whitened residuals.
    whitened: DVector<f64>,
    rows: Vec<Vec<f64>>,
}

impl GpModel {
    /// Model with an exact root.
    pub fn new(dataset: Dataset, hyperparams: KernelHyperparams) -> Result<Self> {
        Self::with_root(dataset, hyperparams, RootKind::Exact)
    }

    pub fn with_root(
        dataset: Dataset,
        hyperparams: KernelHyperparams,
        kind: RootKind,
    ) -> Result<Self> {
        hyperparams.validate()?;
        if !dataset.is_empty() && hyperparams.dim() != dataset.dim() {
            return Err(Error::DimensionMismatch {
                expected: dataset.dim(),
                got: hyperparams.dim(),
            });
        }
        let rows = kernel::rows(dataset.inputs());
        let mut k = kernel::kernel_matrix_rows(&rows, &rows, &hyperparams);
        for i in 0..rows.len() {
            k[(i, i)] += hyperparams.noise_variance;
        }
        let (root, jitter) = match kind {
            RootKind::Exact => {
                let f = linalg::jittered_cholesky(&k)?;
                (f.lower, f.jitter)
            }
            RootKind::Pivoted { rank } => (linalg::pivoted_cholesky(&k, rank)?, 0.0),
        };
        let root_pinv = linalg::root_pseudo_inverse(&root)?;
        let resid = dataset.outcomes().map(|y| y - hyperparams.mean_constant);
        let whitened = &root_pinv * resid;
        Ok(Self {
            dataset,
            hyperparams,
            root,
            root_pinv,
            jitter,
            whitened,
            rows,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hyperparams
    }

    pub fn root(&self) -> &DMatrix<f64> {
        &self.root
    }

    pub fn root_pinv(&self) -> &DMatrix<f64> {
        &self.root_pinv
    }

    /// Diagonal jitter that was needed to decompose `K_XX + σ²I`.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn rank(&self) -> usize {
        self.root.ncols()
    }

    pub fn dim(&self) -> usize {
        self.hyperparams.dim()
    }

    pub fn noise_variance(&self) -> f64 {
        self.hyperparams.noise_variance
    }

    pub(crate) fn whitened(&self) -> &DVector<f64> {
        &self.whitened
    }

    pub(crate) fn train_rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `K_XX + σ²I` for the training inputs.
    pub fn noisy_kernel_matrix(&self) -> DMatrix<f64> {
        let mut k = kernel::kernel_matrix_rows(&self.rows, &self.rows, &self.hyperparams);
        for i in 0..self.rows.len() {
            k[(i, i)] += self.hyperparams.noise_variance;
        }
        k
    }

    /// `R⁺ K(X, P)` for query rows `P`.
    pub(crate) fn whitened_cross(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let kxp = kernel::kernel_matrix_rows(&self.rows, points, &self.hyperparams);
        &self.root_pinv * kxp
    }

    fn check_points(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: points.ncols(),
            });
        }
        Ok(())
    }

    /// Latent posterior at the rows of `points`, through the cached root:
    /// `μ = c + Wᵀ R⁺(y − c)`, `Σ = K_PP − WᵀW` with `W = R⁺ K_XP`.
    pub fn posterior(&self, points: &DMatrix<f64>) -> Result<Posterior> {
        self.check_points(points)?;
        let prow = kernel::rows(points);
        Ok(self.posterior_rows(&prow))
    }

    pub(crate) fn posterior_rows(&self, prow: &[Vec<f64>]) -> Posterior {
        let kpp = kernel::kernel_matrix_rows(prow, prow, &self.hyperparams);
        let c = self.hyperparams.mean_constant;
        if self.dataset.is_empty() {
            return Posterior {
                mean: DVector::from_element(prow.len(), c),
                covariance: kpp,
            };
        }
        let w = self.whitened_cross(prow);
        let mean = w.tr_mul(&self.whitened).add_scalar(c);
        let covariance = kpp - w.tr_mul(&w);
        Posterior { mean, covariance }
    }

    /// Mean and standard deviation at a single point.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let p = self.posterior_rows(&[x.to_vec()]);
        Ok((p.mean[0], p.covariance[(0, 0)].max(0.0).sqrt()))
    }
}
