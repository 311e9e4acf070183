//! Experiment harness: configuration, command-line entry point, result
//! files and the fantasy timing benchmark.

mod cli;
mod config;
mod output;
mod timing;

pub use cli::{run_cli, Cli, ExitStatus, TIMING_FILE};
pub use config::{FitSection, OptimizerSection, Overrides, RunConfig};
pub use output::{
    aggregates_jsonl, emit_results, traces_csv, write_atomic, AGGREGATES_FILE, TRACES_FILE, TRACE_COLUMNS,
};
pub use timing::{
    fantasy_benchmark, scaling_exponent, time_cell, timing_csv, write_timing_csv, TimingConfig, TimingRow,
    MAX_TIMING_SIZE,
};
