//! Regenerates `data/optima.txt` by grid search plus local refinement.
//!
//! Run with `cargo run --release --example compute_optima > crates/core/data/optima.txt`.

use msbo::bench::{format_optima, search_optimum, BenchmarkFunction, SearchConfig};

fn main() -> msbo::Result<()> {
    let cfg = SearchConfig::default();
    let mut records = Vec::new();
    for f in BenchmarkFunction::ALL {
        eprintln!("searching {f} ...");
        records.push(search_optimum(f, &cfg)?);
    }
    println!("# Global maxima of the negated benchmark functions on their native boxes.");
    println!("# name | argmax | max | oracle");
    print!("{}", format_optima(&records));
    Ok(())
}
