//! Conditions a GP on fantasized outcomes through the cached root update and
//! checks the result against from-scratch conditioning.
//!
//! `cargo run --release --example fast_fantasies`

use std::sync::Arc;

use msbo::fantasy::{cache_size_accounting, FantasyModel, NaiveFantasies};
use msbo::gp::{Dataset, GpModel, KernelHyperparams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> msbo::Result<()> {
    let (n, d) = (20, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
    let ys: Vec<f64> = xs.iter().map(|p| (5.0 * p[0]).sin() - p[1]).collect();
    let hp = KernelHyperparams::new(vec![0.3; d], 1.0, 1e-3, 0.0)?;
    let base = Arc::new(GpModel::new(Dataset::from_rows(&xs, &ys)?, hp)?);

    // two levels, one new point each, ten fantasies per level
    let level1 = DMatrix::from_row_slice(1, d, &[0.4, 0.6]);
    let y1 = DMatrix::from_fn(10, 1, |i, _| -1.0 + 0.2 * i as f64);
    let f1 = Arc::new(FantasyModel::fantasize(base.clone(), &[level1], &y1)?);
    let level2: Vec<DMatrix<f64>> = (0..10).map(|b| DMatrix::from_row_slice(1, d, &[0.1 * b as f64, 0.3])).collect();
    let y2 = DMatrix::from_fn(100, 1, |i, _| ((i * 37) % 17) as f64 / 8.0 - 1.0);
    let f2 = FantasyModel::fantasize(f1, &level2, &y2)?;

    let query = DMatrix::from_row_slice(2, d, &[0.2, 0.2, 0.8, 0.9]);
    let naive = NaiveFantasies::condition(&f2)?;
    let mut worst: f64 = 0.0;
    for b in 0..f2.num_branches() {
        let fast = f2.posterior(b, &query)?;
        let slow = naive.models[b].posterior(&query)?;
        worst = worst.max((fast.mean - slow.mean).amax());
        worst = worst.max((fast.covariance - slow.covariance).amax());
    }
    println!("{} leaf branches, max |fast − from scratch| = {worst:.2e}", f2.num_branches());

    let (n_naive, n_ff) = cache_size_accounting(n, n, &[1, 1], &[10, 10])?;
    println!(
        "cache entries: fast path {} (N_FF {n_ff}), from scratch {} (N_naive {n_naive})",
        f2.stored_entries(),
        naive.stored_entries
    );
    Ok(())
}
