//! Global optima of the benchmark functions.
//!
//! The values ship in `data/optima.txt`, one record per line:
//! `name | argmax (comma separated) | max | how it was found`. Lines starting
//! with `#` are comments. The file is regenerated by the `compute_optima`
//! example, which runs [`search_optimum`].

use super::functions::BenchmarkFunction;
use crate::error::{Error, Result};

const OPTIMA_FILE: &str = include_str!("../../data/optima.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct KnownOptimum {
    pub function: BenchmarkFunction,
    pub argmax: Vec<f64>,
    pub value: f64,
    pub oracle: String,
}

/// Parses the optima file format.
pub fn parse_optima(text: &str) -> Result<Vec<KnownOptimum>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Config(format!("optima line {}: {what}", lineno + 1));
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 `|`-separated fields"));
        }
        let function: BenchmarkFunction = fields[0].parse()?;
        let argmax = fields[1]
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad argmax"))?;
        if argmax.len() != function.dim() {
            return Err(bad("argmax has the wrong dimension"));
        }
        let value: f64 = fields[2].parse().map_err(|_| bad("bad max value"))?;
        out.push(KnownOptimum {
            function,
            argmax,
            value,
            oracle: fields[3].to_string(),
        });
    }
    Ok(out)
}

/// Renders records in the optima file format (inverse of [`parse_optima`]).
pub fn format_optima(records: &[KnownOptimum]) -> String {
    let mut s = String::new();
    for r in records {
        // `+ 0.0` turns a negative zero into a plain zero
        let argmax: Vec<String> = r.argmax.iter().map(|v| format!("{:.10}", v + 0.0)).collect();
        s.push_str(&format!(
            "{} | {} | {:.10} | {}\n",
            r.function,
            argmax.join(", "),
            r.value + 0.0,
            r.oracle
        ));
    }
    s
}

/// Shipped optimum of `function`.
pub fn known_optimum(function: BenchmarkFunction) -> Result<KnownOptimum> {
    parse_optima(OPTIMA_FILE)?
        .into_iter()
        .find(|r| r.function == function)
        .ok_or_else(|| Error::Config(format!("no stored optimum for `{function}`")))
}

/// Published locations of the global optimum, used as extra refinement
/// starts next to the grid.
pub fn reference_candidates(function: BenchmarkFunction) -> Vec<Vec<f64>> {
    match function {
        BenchmarkFunction::Eggholder => vec![vec![512.0, 404.2319]],
        BenchmarkFunction::Dropwave => vec![vec![0.0, 0.0]],
        BenchmarkFunction::Shubert => vec![vec![-7.0835, 4.8580], vec![-0.8003, -7.7083]],
        BenchmarkFunction::Rastrigin4 => vec![vec![0.0; 4]],
        BenchmarkFunction::Ackley2 => vec![vec![0.0; 2]],
        BenchmarkFunction::Ackley5 => vec![vec![0.0; 5]],
        BenchmarkFunction::Bukin => vec![vec![-10.0, 1.0]],
        BenchmarkFunction::Shekel5 | BenchmarkFunction::Shekel7 => vec![vec![4.0; 4]],
    }
}

/// Settings for [`search_optimum`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Grid points per coordinate, by dimension (index `d − 1`).
    pub grid: Vec<usize>,
    /// Best grid points that get refined.
    pub refine_top: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid: vec![4001, 2001, 201, 61, 31],
            refine_top: 25,
        }
    }
}

/// Dense grid over the native box followed by bounded pattern-search
/// refinement from the best grid points and the published candidates.
pub fn search_optimum(function: BenchmarkFunction, cfg: &SearchConfig) -> Result<KnownOptimum> {
    let d = function.dim();
    let bounds = function.bounds();
    let per = *cfg
        .grid
        .get(d - 1)
        .ok_or_else(|| Error::Config(format!("no grid size for dimension {d}")))?;
    if per < 2 {
        return Err(Error::Config("grid needs at least 2 points per coordinate".into()));
    }
    let total = per.pow(d as u32);
    let mut top: Vec<(f64, Vec<f64>)> = Vec::with_capacity(cfg.refine_top + 1);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    for _ in 0..total {
        for i in 0..d {
            let (lo, hi) = bounds[i];
            x[i] = lo + (hi - lo) * idx[i] as f64 / (per - 1) as f64;
        }
        let v = function.evaluate(&x)?;
        if top.len() < cfg.refine_top || v > top.last().expect("non-empty").0 {
            let pos = top.partition_point(|(t, _)| *t >= v);
            top.insert(pos, (v, x.clone()));
            top.truncate(cfg.refine_top);
        }
        for i in 0..d {
            idx[i] += 1;
            if idx[i] < per {
                break;
            }
            idx[i] = 0;
        }
    }
    let step0: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / (per - 1) as f64).collect();
    let starts = top
        .into_iter()
        .map(|(_, x)| x)
        .chain(reference_candidates(function));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in starts {
        let (v, x) = pattern_search(function, s, &step0)?;
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, x));
        }
    }
    let (value, argmax) = best.expect("at least one start");
    Ok(KnownOptimum {
        function,
        argmax,
        value,
        oracle: format!(
            "{per}^{d} grid over the native box, pattern-search refinement of the best {} grid points and published candidates",
            cfg.refine_top
        ),
    })
}

/// Compass search clamped to the box, halving the step until it is below
/// `1e-10` of the box width.
fn pattern_search(function: BenchmarkFunction, mut x: Vec<f64>, step0: &[f64]) -> Result<(f64, Vec<f64>)> {
    let bounds = function.bounds();
    let mut fx = function.evaluate(&x)?;
    let mut step = step0.to_vec();
    let widths: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    while step.iter().zip(&widths).any(|(s, w)| *s > 1e-10 * w) {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + dir * step[i]).clamp(bounds[i].0, bounds[i].1);
                let fy = function.evaluate(&y)?;
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    Ok((fx, x))
}
