//! Synthetic benchmarks, their optima and the experiment loop.

mod functions;
mod optima;
mod run;

pub use functions::BenchmarkFunction;
pub use optima::{
    format_optima, known_optimum, parse_optima, reference_candidates, search_optimum, KnownOptimum, SearchConfig,
};
pub use run::{
    derive_seed, gap, gap_value, mean_and_stderr, run_bo, run_experiment, Aggregate, BenchmarkTrace, BoConfig,
    ExperimentConfig, ExperimentResult, GapScore, RepeatOutcome, TraceRecord,
};
