use std::process::ExitCode;

use clap::Parser;
use msbo::harness::{run_cli, Cli};

fn main() -> ExitCode {
    ExitCode::from(run_cli(&Cli::parse()).code())
}
