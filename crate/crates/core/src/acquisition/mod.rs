//! Acquisition values: expected improvement, Monte Carlo batch improvement,
//! the multi-step tree objective and its special cases.

mod base;
mod batch;
mod eno;
mod layout;
mod tree;

use crate::stats::{norm_cdf, norm_pdf};

pub use batch::{batch_improvement_mc, batch_improvement_weighted, binoculars_select, selection_probabilities, BinocularsChoice, QeiObjective};
pub use eno::{eno_objective, EnoObjective};
pub use layout::{draw_base_samples, extract_candidate, TreeLayout, TreeVariables, DEFAULT_FANTASY_COUNTS};
pub use tree::{multi_step_objective, tree_value_and_gradient, MultiStepObjective, TiedTreeObjective};

/// Posterior variances below this are treated as `1e-18` (standard deviation
/// `1e-9`) so that expected improvement stays differentiable.
pub const VARIANCE_FLOOR: f64 = 1e-18;

/// Default number of Monte Carlo base samples for batch values.
pub const DEFAULT_MC_SAMPLES: usize = 128;

/// Expected improvement `E[(Y − b)⁺]` of `Y ~ N(mean, std²)`.
pub fn ei_analytic(mean: f64, std: f64, incumbent: f64) -> f64 {
    if std <= 0.0 {
        return (mean - incumbent).max(0.0);
    }
    let z = (mean - incumbent) / std;
    (std * (z * norm_cdf(z) + norm_pdf(z))).max(0.0)
}

/// Objective value split by lookahead stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionValue {
    pub value: f64,
    pub stages: Vec<f64>,
}

impl AcquisitionValue {
    pub fn from_stages(stages: Vec<f64>) -> Self {
        Self {
            value: stages.iter().sum(),
            stages,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_closed_forms() {
        assert!((ei_analytic(0.0, 1.0, 0.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(ei_analytic(-1.0, 0.0, 0.0), 0.0);
        assert_eq!(ei_analytic(2.5, 0.0, 1.0), 1.5);
    }

    /// `E(Y)⁺` for `Y ~ N(1, 4)` by composite Simpson integration.
    #[test]
    fn ei_matches_numeric_integration() {
        let (mu, sd) = (1.0, 2.0);
        let n = 20_000;
        let (lo, hi) = (0.0, mu + 12.0 * sd);
        let h = (hi - lo) / n as f64;
        let f = |y: f64| y * (-(y - mu) * (y - mu) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = s * h / 3.0;
        assert!((ei_analytic(mu, sd, 0.0) - oracle).abs() < 1e-9);
        assert!((oracle - 1.3956).abs() < 1e-4);
    }

    #[test]
    fn ei_monotone() {
        let mut prev = 0.0;
        for i in 0..50 {
            let v = ei_analytic(-2.0 + 0.1 * i as f64, 1.0, 0.0);
            assert!(v > prev);
            prev = v;
        }
        let mut prev = 0.0;
        for i in 1..50 {
            let v = ei_analytic(-0.5, 0.1 * i as f64, 0.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn stages_sum_to_value() {
        let v = AcquisitionValue::from_stages(vec![0.1, 0.2, 0.3]);
        assert!((v.value - 0.6).abs() < 1e-15);
    }
}
