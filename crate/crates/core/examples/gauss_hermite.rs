//! Expected improvement three ways: closed form, Gauss–Hermite quadrature
//! and Monte Carlo with fixed base samples.
//!
//! `cargo run --release --example gauss_hermite`

use msbo::acquisition::{batch_improvement_mc, ei_analytic};
use msbo::gp::Posterior;
use msbo::quadrature::{correlate, gauss_hermite_rule, normal_matrix};
use nalgebra::{DMatrix, DVector};

fn main() -> msbo::Result<()> {
    let (sigma, b) = (1.0, 0.0);
    let z = normal_matrix(100_000, 1, 0);
    println!("(μ−b)/σ   analytic   GH-10      GH-40      MC-1e5");
    for u in [-3.0, -1.5, 0.0, 0.5, 1.5, 3.0] {
        let mu = b + u * sigma;
        let gh = |m: usize| -> msbo::Result<f64> {
            let (nodes, weights) = gauss_hermite_rule(m)?;
            Ok(nodes.iter().zip(&weights).map(|(z, w)| w * (mu + sigma * z - b).max(0.0)).sum())
        };
        let post = Posterior {
            mean: DVector::from_element(1, mu),
            covariance: DMatrix::from_element(1, 1, sigma * sigma),
        };
        let mc = batch_improvement_mc(&correlate(&post, &z)?, b);
        println!(
            "{u:+6.2}    {:.6}   {:.6}   {:.6}   {:.6}",
            ei_analytic(mu, sigma, b),
            gh(10)?,
            gh(40)?,
            mc
        );
    }
    // the kink of (y − b)⁺ limits polynomial quadrature; more nodes help slowly
    Ok(())
}
