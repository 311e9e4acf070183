//! One-shot optimization of a three-step lookahead tree on a 1-d model.
//!
//! `cargo run --release --example multi_step_tree`

use std::sync::Arc;

use msbo::acquisition::{extract_candidate, MultiStepObjective, TreeLayout, TreeVariables};
use msbo::gp::{Dataset, GpModel, KernelHyperparams};
use msbo::optim::{optimize_box, random_inits, OptimizerConfig};
use msbo::quadrature::SampleMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msbo::Result<()> {
    let xs = [0.05f64, 0.3, 0.45, 0.9];
    let ys: Vec<f64> = xs.iter().map(|x| (9.0 * x).sin()).collect();
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    let hp = KernelHyperparams::new(vec![0.15], 1.0, 1e-4, 0.0)?;
    let model = Arc::new(GpModel::new(Dataset::from_rows(&rows, &ys)?, hp)?);
    let incumbent = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let layout = TreeLayout::new(3, vec![5, 3], 1, SampleMode::GaussHermite)?;
    println!(
        "{} nodes per tree ({} variables), levels {:?}",
        layout.num_nodes(),
        layout.num_variables(),
        layout.level_sizes()
    );
    let samples = layout.draw_base_samples(0)?;
    let obj = MultiStepObjective::new(model.clone(), layout.clone(), samples, incumbent)?;
    let cfg = OptimizerConfig {
        restarts: 32,
        raw_samples: 32,
        ..OptimizerConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inits = random_inits(&obj, cfg.restarts, cfg.raw_samples, &mut rng)?;
    let sol = optimize_box(&obj, &inits, &cfg)?;
    let tree = TreeVariables::new(layout, sol.x.clone())?;
    let value = obj.evaluate(&sol.x)?;

    println!("root x = {:.4}", extract_candidate(&tree)[0]);
    println!("value {:.5}, by stage {:?}", value.value, value.stages);
    for j in 0..5 {
        println!("  after fantasy {j}: next x = {:.4}", tree.node_at(&[j])?[0]);
    }
    Ok(())
}
