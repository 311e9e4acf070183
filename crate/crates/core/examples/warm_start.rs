//! Warm-start inits built from the previous iteration's tree.
//!
//! `cargo run --release --example warm_start`

use msbo::acquisition::TreeLayout;
use msbo::optim::{eta_schedule, gamma_schedule, warm_start_init, WarmStartState};
use msbo::quadrature::SampleMode;

fn main() -> msbo::Result<()> {
    let layout = TreeLayout::new(3, vec![3, 2], 1, SampleMode::GaussHermite)?;
    // previous tree: root, three level-1 nodes, six level-2 nodes
    let state = WarmStartState {
        layout: layout.clone(),
        solution: vec![0.50, 0.10, 0.40, 0.70, 0.11, 0.12, 0.41, 0.42, 0.71, 0.72],
        fantasy_values: vec![-0.8, 0.1, 0.9],
        observed: 0.25,
    };
    println!("γ schedule {:?}", gamma_schedule(5));
    println!("η schedule {:?}", eta_schedule(3));
    let ws = warm_start_init(&state, 5, &layout, 42);
    println!("promoted branch {:?} (fantasy nearest to the observation)", ws.branch);
    for (r, init) in ws.inits.iter().enumerate() {
        let cells: Vec<String> = init.iter().map(|v| format!("{v:.3}")).collect();
        println!("restart {r}: {}", cells.join(" "));
    }
    Ok(())
}
