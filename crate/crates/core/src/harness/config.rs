//! Run configuration: a TOML file, command-line overrides, and validation
//! into an [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::timing::TimingConfig;
use crate::bench::{BenchmarkFunction, BoConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::gp::FitBounds;
use crate::optim::OptimizerConfig;
use crate::policy::{Policy, ProposalConfig};

/// Acquisition optimizer settings, the `[optimizer]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub restarts: usize,
    pub warm_restarts: usize,
    pub tied_restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub history: usize,
    pub raw_samples: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        Self {
            restarts: o.restarts,
            warm_restarts: o.warm_restarts,
            tied_restarts: o.tied_restarts,
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            history: o.history,
            raw_samples: o.raw_samples,
        }
    }
}

impl From<&OptimizerSection> for OptimizerConfig {
    fn from(s: &OptimizerSection) -> Self {
        OptimizerConfig {
            restarts: s.restarts,
            warm_restarts: s.warm_restarts,
            tied_restarts: s.tied_restarts,
            max_iters: s.max_iters,
            grad_tol: s.grad_tol,
            history: s.history,
            raw_samples: s.raw_samples,
        }
    }
}

/// Hyperparameter fitting, the `[fit]` table. Bounds are `[low, high]`
/// in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub restarts: usize,
    pub lengthscale: [f64; 2],
    pub signal_variance: [f64; 2],
    pub noise_variance: [f64; 2],
}

impl Default for FitSection {
    fn default() -> Self {
        let b = FitBounds::default();
        Self {
            restarts: BoConfig::default().fit_restarts,
            lengthscale: [b.lengthscale.0, b.lengthscale.1],
            signal_variance: [b.signal_variance.0, b.signal_variance.1],
            noise_variance: [b.noise_variance.0, b.noise_variance.1],
        }
    }
}

impl FitSection {
    fn bounds(&self) -> Result<FitBounds> {
        for (name, [lo, hi]) in [
            ("lengthscale", self.lengthscale),
            ("signal_variance", self.signal_variance),
            ("noise_variance", self.noise_variance),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!("fit.{name} bounds must satisfy 0 < low ≤ high")));
            }
        }
        Ok(FitBounds {
            lengthscale: (self.lengthscale[0], self.lengthscale[1]),
            signal_variance: (self.signal_variance[0], self.signal_variance[1]),
            noise_variance: (self.noise_variance[0], self.noise_variance[1]),
        })
    }
}

/// Everything a run needs. Every key has a matching command-line flag or
/// a default; `functions` and `policy` are required for experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub functions: Vec<String>,
    pub policy: Option<String>,
    pub repeats: usize,
    pub seed: u64,
    /// Overrides the default `20d` iterations.
    pub iterations: Option<usize>,
    /// Overrides the default `2d` initial design.
    pub initial_points: Option<usize>,
    /// Overrides the fantasy counts of a `k-step` policy.
    pub fantasy_counts: Option<Vec<usize>>,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub eno_fantasies: usize,
    pub warm_start: bool,
    pub record_wall_time: bool,
    pub fit: FitSection,
    pub optimizer: OptimizerSection,
    pub fantasy_bench: TimingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bo = BoConfig::default();
        Self {
            functions: Vec::new(),
            policy: None,
            repeats: 1,
            seed: 0,
            iterations: None,
            initial_points: None,
            fantasy_counts: None,
            out: PathBuf::from("results"),
            threads: 0,
            eno_fantasies: bo.proposal.eno_fantasies,
            warm_start: bo.warm_start,
            record_wall_time: bo.record_wall_time,
            fit: FitSection::default(),
            optimizer: OptimizerSection::default(),
            fantasy_bench: TimingConfig::default(),
        }
    }
}

/// Command-line values that replace file values when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub functions: Option<Vec<String>>,
    pub policy: Option<String>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Parses the TOML form; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// TOML form accepted by [`RunConfig::from_toml`].
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.functions {
            self.functions = v;
        }
        if let Some(v) = o.policy {
            self.policy = Some(v);
        }
        if let Some(v) = o.repeats {
            self.repeats = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.iterations {
            self.iterations = Some(v);
        }
        if let Some(v) = o.out {
            self.out = v;
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
    }

    /// Parsed policy, with the fantasy-count override applied.
    pub fn policy(&self) -> Result<Policy> {
        let spec = self
            .policy
            .as_deref()
            .ok_or_else(|| Error::Config("missing key `policy`".into()))?;
        let policy: Policy = spec.parse()?;
        match &self.fantasy_counts {
            Some(c) => policy.with_counts(c.clone()),
            None => Ok(policy),
        }
    }

    /// Validated experiment description.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        if self.functions.is_empty() {
            return Err(Error::Config("missing key `functions`".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("`repeats` must be ≥ 1".into()));
        }
        let functions = self
            .functions
            .iter()
            .map(|f| f.parse::<BenchmarkFunction>())
            .collect::<Result<Vec<_>>>()?;
        let policy = self.policy()?;
        let optimizer = OptimizerConfig::from(&self.optimizer);
        optimizer.validate()?;
        if self.eno_fantasies == 0 {
            return Err(Error::Config("`eno_fantasies` must be ≥ 1".into()));
        }
        Ok(ExperimentConfig {
            functions,
            repeats: self.repeats,
            seed: self.seed,
            bo: BoConfig {
                policy,
                iterations: self.iterations,
                initial_points: self.initial_points,
                proposal: ProposalConfig {
                    optimizer,
                    eno_fantasies: self.eno_fantasies,
                },
                fit_restarts: self.fit.restarts,
                fit_bounds: self.fit.bounds()?,
                warm_start: self.warm_start,
                record_wall_time: self.record_wall_time,
            },
        })
    }
}
