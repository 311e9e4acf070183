//! Fits a Matérn 5/2 GP by evidence maximization and prints predictions.
//!
//! `cargo run --release --example gp_fit`

use msbo::gp::{fit_hyperparameters, Dataset, FitConfig, GpModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> msbo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random(), rng.random()]).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|p| (6.0 * p[0]).sin() + 0.3 * (2.0 * p[1]).cos())
        .collect();
    let data = Dataset::from_rows(&xs, &ys)?;

    let fit = fit_hyperparameters(&data, &FitConfig::default())?;
    let hp = &fit.hyperparams;
    println!("log evidence {:.4}", fit.log_evidence);
    println!(
        "lengthscales {:?}  signal {:.4}  noise {:.2e}  mean {:.4}",
        hp.lengthscales, hp.signal_variance, hp.noise_variance, hp.mean_constant
    );

    let model = GpModel::new(data, hp.clone())?;
    for x in [[0.1, 0.5], [0.5, 0.5], [0.9, 0.2]] {
        let (mean, var) = model.predict(&x)?;
        let truth = (6.0 * x[0]).sin() + 0.3 * (2.0 * x[1]).cos();
        println!("x = {x:?}  mean {mean:+.4}  sd {:.4}  truth {truth:+.4}", var.sqrt());
    }
    Ok(())
}
