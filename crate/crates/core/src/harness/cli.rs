//! Flag parsing and the top-level run.

use std::path::PathBuf;

use clap::Parser;

use super::config::{Overrides, RunConfig};
use super::output::emit_results;
use super::timing::{fantasy_benchmark, write_timing_csv};
use crate::bench::run_experiment;
use crate::error::{Error, Result};

/// Timing CSV written by `--fantasy-bench`.
pub const TIMING_FILE: &str = "fantasy_timing.csv";

#[derive(Debug, Parser)]
#[command(name = "msbo", about = "Multi-step lookahead Bayesian optimization benchmarks")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Benchmark functions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub function: Option<Vec<String>>,
    /// ei | k-step | k-path | k-eno | binoculars-q
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// BO iterations (default 20 per dimension).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Run the fast-fantasy timing benchmark instead of an experiment.
    #[arg(long)]
    pub fantasy_bench: bool,
}

/// How a run ended; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    PartialFailure,
    ConfigError,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::PartialFailure => 2,
            ExitStatus::ConfigError => 1,
        }
    }
}

impl Cli {
    /// File config (if any) with the flags applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(Overrides {
            functions: self.function.clone(),
            policy: self.policy.clone(),
            repeats: self.repeats,
            seed: self.seed,
            iterations: self.iters,
            out: self.out.clone(),
            threads: self.threads,
        });
        Ok(cfg)
    }
}

fn execute(cli: &Cli) -> Result<ExitStatus> {
    let cfg = cli.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    if cli.fantasy_bench {
        let rows = pool.install(|| fantasy_benchmark(&cfg.fantasy_bench))?;
        let path = cfg.out.join(TIMING_FILE);
        write_timing_csv(&rows, &path)?;
        for r in &rows {
            eprintln!(
                "n={:5} m={:4}  fast {:.3e}s  naive {:.3e}s  speedup {:.1}x",
                r.n, r.m, r.fast_s, r.naive_s, r.speedup
            );
        }
        eprintln!("wrote {}", path.display());
        return Ok(ExitStatus::Success);
    }
    let exp = cfg.experiment()?;
    let result = pool.install(|| run_experiment(&exp))?;
    let (traces, aggregates) = emit_results(&result, &cfg.out)?;
    for a in &result.aggregates {
        eprintln!(
            "{:12} {:14} GAP {:.3} ± {:.3}  {:.2}s/iter  ({} failed)",
            a.function, a.policy, a.mean_gap, a.std_error, a.mean_time_per_iter_s, a.failures
        );
    }
    for o in &result.outcomes {
        if let Err(e) = &o.result {
            eprintln!("repeat {} of {} failed: {e}", o.repeat, o.function);
        }
    }
    eprintln!("wrote {} and {}", traces.display(), aggregates.display());
    Ok(if result.failures() > 0 {
        ExitStatus::PartialFailure
    } else {
        ExitStatus::Success
    })
}

/// Runs the command line and reports errors on stderr.
pub fn run_cli(cli: &Cli) -> ExitStatus {
    match execute(cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::ConfigError
        }
    }
}
