//! Trace CSV and aggregate JSONL files, written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::bench::{known_optimum, Aggregate, ExperimentResult};
use crate::error::{Error, Result};

/// Fixed leading columns of the trace CSV; `x0..x{D−1}` follow.
pub const TRACE_COLUMNS: [&str; 7] = ["function", "policy", "repeat", "iteration", "best_y", "gap", "wall_time_s"];

pub const TRACES_FILE: &str = "traces.csv";
pub const AGGREGATES_FILE: &str = "aggregates.jsonl";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Replaces `path` with `bytes` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Trace CSV for every successful repeat, in (function, repeat) order.
pub fn traces_csv(result: &ExperimentResult) -> Result<Vec<u8>> {
    let width = result
        .outcomes
        .iter()
        .map(|o| o.function.dim())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = TRACE_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..width).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut outcomes: Vec<_> = result.outcomes.iter().collect();
    outcomes.sort_by_key(|o| (o.function.name(), o.repeat));
    for o in outcomes {
        let Ok(trace) = &o.result else { continue };
        let y_star = known_optimum(o.function)?.value;
        let gaps = trace.gap_series(y_star)?;
        for (rec, g) in trace.records.iter().zip(gaps) {
            let mut row = vec![
                o.function.name().to_string(),
                trace.policy.clone(),
                o.repeat.to_string(),
                rec.iteration.to_string(),
                rec.best.to_string(),
                g.to_string(),
                rec.wall_time_s.to_string(),
            ];
            row.extend(rec.point.iter().map(f64::to_string));
            row.resize(TRACE_COLUMNS.len() + width, String::new());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// One JSON object per line.
pub fn aggregates_jsonl(aggregates: &[Aggregate]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for a in aggregates {
        serde_json::to_writer(&mut out, a).map_err(|e| Error::Config(format!("json: {e}")))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes `traces.csv` and `aggregates.jsonl` under `dir`, returning their
/// paths.
pub fn emit_results(result: &ExperimentResult, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let traces = dir.join(TRACES_FILE);
    let aggregates = dir.join(AGGREGATES_FILE);
    write_atomic(&traces, &traces_csv(result)?)?;
    write_atomic(&aggregates, &aggregates_jsonl(&result.aggregates)?)?;
    Ok((traces, aggregates))
}
