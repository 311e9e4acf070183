//! A complete Bayesian optimization run on one benchmark.
//!
//! `cargo run --release --example bo_loop -- [function] [policy] [iterations]`
//! e.g. `cargo run --release --example bo_loop -- shekel5 2-step 20`.

use msbo::bench::{gap, known_optimum, run_bo, BenchmarkFunction, BoConfig};

fn main() -> msbo::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let function: BenchmarkFunction = args.first().map_or("ackley2", String::as_str).parse()?;
    let policy = args.get(1).map_or("2-step", String::as_str).parse()?;
    let iterations = args.get(2).map(|s| s.parse::<usize>()).transpose().map_err(|e| msbo::Error::Config(e.to_string()))?;

    let cfg = BoConfig {
        policy,
        iterations: Some(iterations.unwrap_or(10)),
        ..BoConfig::default()
    };
    let trace = run_bo(function, &cfg, 1)?;
    let y_star = known_optimum(function)?.value;
    for r in &trace.records[trace.initial_count..] {
        let x: Vec<String> = r.point.iter().map(|v| format!("{v:8.3}")).collect();
        println!(
            "iter {:3}  y {:10.4}  best {:10.4}  {:.2}s  x = [{}]",
            r.iteration,
            r.value,
            r.best,
            r.wall_time_s,
            x.join(",")
        );
    }
    println!(
        "{function} {}: initial best {:.4}, final best {:.4}, optimum {y_star:.4}, GAP {:.3}",
        trace.policy,
        trace.initial_best(),
        trace.best(),
        gap(&trace, y_star)?.value()
    );
    Ok(())
}
