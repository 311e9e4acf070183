//! Fast cached fantasy updates against from-scratch conditioning.
//!
//! `cargo run --release --example fantasy_timing`

use msbo::harness::{scaling_exponent, time_cell, TimingConfig};

fn main() -> msbo::Result<()> {
    let cfg = TimingConfig {
        reps: 3,
        ..TimingConfig::default()
    };
    let sizes = [128, 256, 512];
    let mut fast = Vec::new();
    let mut naive = Vec::new();
    for &n in &sizes {
        let row = time_cell(n, 16, &cfg)?;
        println!(
            "n={n:5} m=16  fast {:.2e}s  from scratch {:.2e}s  speedup {:.0}x",
            row.fast_s, row.naive_s, row.speedup
        );
        fast.push(row.fast_s);
        naive.push(row.naive_s);
    }
    println!(
        "time-vs-n exponents: fast {:.2}, from scratch {:.2}",
        scaling_exponent(&sizes, &fast)?,
        scaling_exponent(&sizes, &naive)?
    );
    Ok(())
}
