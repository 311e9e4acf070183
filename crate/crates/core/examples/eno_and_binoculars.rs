//! The non-myopic baselines: ENO (one fantasy stage, then a batch) and
//! binoculars (q-EI batch, then one point sampled by EI).
//!
//! `cargo run --release --example eno_and_binoculars`

use std::sync::Arc;

use msbo::gp::{Dataset, GpModel, KernelHyperparams};
use msbo::policy::{propose_next, Policy, ProposalConfig};

fn main() -> msbo::Result<()> {
    let rows = vec![vec![0.2, 0.2], vec![0.8, 0.3], vec![0.5, 0.9], vec![0.4, 0.5]];
    let ys: Vec<f64> = rows.iter().map(|p| -(p[0] - 0.6f64).powi(2) - (p[1] - 0.7f64).powi(2)).collect();
    let hp = KernelHyperparams::new(vec![0.3, 0.3], 0.05, 1e-5, -0.1)?;
    let model = Arc::new(GpModel::new(Dataset::from_rows(&rows, &ys)?, hp)?);
    let incumbent = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let cfg = ProposalConfig::default();
    for spec in ["ei", "3-eno", "binoculars-4"] {
        let policy: Policy = spec.parse()?;
        let p = propose_next(&model, incumbent, &policy, None, &cfg, 11)?;
        println!(
            "{spec:14} next x = [{:.4}, {:.4}]  objective {:.5}  ({:.3}s)",
            p.point[0], p.point[1], p.value, p.wall_time_s
        );
    }
    Ok(())
}
