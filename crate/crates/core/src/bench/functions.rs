//! Synthetic test functions in the maximization convention.
//!
//! Each is the standard minimization test function, negated, on its usual
//! native box.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const SHEKEL_BETA: [f64; 10] = [0.1, 0.2, 0.2, 0.4, 0.4, 0.6, 0.3, 0.7, 0.5, 0.5];
const SHEKEL_C: [[f64; 10]; 2] = [
    [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
    [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkFunction {
    Eggholder,
    Dropwave,
    Shubert,
    Rastrigin4,
    Ackley2,
    Ackley5,
    Bukin,
    Shekel5,
    Shekel7,
}

impl BenchmarkFunction {
    pub const ALL: [BenchmarkFunction; 9] = [
        BenchmarkFunction::Eggholder,
        BenchmarkFunction::Dropwave,
        BenchmarkFunction::Shubert,
        BenchmarkFunction::Rastrigin4,
        BenchmarkFunction::Ackley2,
        BenchmarkFunction::Ackley5,
        BenchmarkFunction::Bukin,
        BenchmarkFunction::Shekel5,
        BenchmarkFunction::Shekel7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkFunction::Eggholder => "eggholder",
            BenchmarkFunction::Dropwave => "dropwave",
            BenchmarkFunction::Shubert => "shubert",
            BenchmarkFunction::Rastrigin4 => "rastrigin4",
            BenchmarkFunction::Ackley2 => "ackley2",
            BenchmarkFunction::Ackley5 => "ackley5",
            BenchmarkFunction::Bukin => "bukin",
            BenchmarkFunction::Shekel5 => "shekel5",
            BenchmarkFunction::Shekel7 => "shekel7",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            BenchmarkFunction::Rastrigin4 | BenchmarkFunction::Shekel5 | BenchmarkFunction::Shekel7 => 4,
            BenchmarkFunction::Ackley5 => 5,
            _ => 2,
        }
    }

    /// Native box, one `(low, high)` per coordinate.
    pub fn bounds(self) -> Vec<(f64, f64)> {
        let d = self.dim();
        match self {
            BenchmarkFunction::Eggholder => vec![(-512.0, 512.0); d],
            BenchmarkFunction::Dropwave | BenchmarkFunction::Rastrigin4 => vec![(-5.12, 5.12); d],
            BenchmarkFunction::Shubert => vec![(-10.0, 10.0); d],
            BenchmarkFunction::Ackley2 | BenchmarkFunction::Ackley5 => vec![(-32.768, 32.768); d],
            BenchmarkFunction::Bukin => vec![(-15.0, -5.0), (-3.0, 3.0)],
            BenchmarkFunction::Shekel5 | BenchmarkFunction::Shekel7 => vec![(0.0, 10.0); d],
        }
    }

    /// Function value at a native point; errors outside the box.
    pub fn evaluate(self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (i, (v, (lo, hi))) in x.iter().zip(self.bounds()).enumerate() {
            if !(lo..=hi).contains(v) {
                return Err(Error::OutOfBounds {
                    function: self.name().into(),
                    detail: format!("x{i} = {v} not in [{lo}, {hi}]"),
                });
            }
        }
        Ok(-self.minimization_value(x))
    }

    fn minimization_value(self, x: &[f64]) -> f64 {
        match self {
            BenchmarkFunction::Eggholder => {
                let (a, b) = (x[0], x[1]);
                -(b + 47.0) * (b + a / 2.0 + 47.0).abs().sqrt().sin() - a * (a - (b + 47.0)).abs().sqrt().sin()
            }
            BenchmarkFunction::Dropwave => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                -(1.0 + (12.0 * r2.sqrt()).cos()) / (0.5 * r2 + 2.0)
            }
            BenchmarkFunction::Shubert => {
                let factor = |v: f64| (1..=5).map(|i| i as f64 * ((i as f64 + 1.0) * v + i as f64).cos()).sum::<f64>();
                factor(x[0]) * factor(x[1])
            }
            BenchmarkFunction::Rastrigin4 => {
                10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
            }
            BenchmarkFunction::Ackley2 | BenchmarkFunction::Ackley5 => {
                let n = x.len() as f64;
                let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
                let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
                -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
            }
            BenchmarkFunction::Bukin => 100.0 * (x[1] - 0.01 * x[0] * x[0]).abs().sqrt() + 0.01 * (x[0] + 10.0).abs(),
            BenchmarkFunction::Shekel5 => shekel(x, 5),
            BenchmarkFunction::Shekel7 => shekel(x, 7),
        }
    }

    /// Maps a point of `[0,1]^d` to the native box.
    pub fn to_native(self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.bounds())
            .map(|(v, (lo, hi))| (lo + v * (hi - lo)).clamp(lo, hi))
            .collect()
    }

    /// Maps a native point to `[0,1]^d`.
    pub fn to_unit(self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.bounds())
            .map(|(v, (lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }
}

fn shekel(x: &[f64], m: usize) -> f64 {
    -(0..m)
        .map(|i| {
            let dist: f64 = x
                .iter()
                .enumerate()
                .map(|(j, v)| (v - SHEKEL_C[j % 2][i]).powi(2))
                .sum();
            1.0 / (dist + SHEKEL_BETA[i])
        })
        .sum::<f64>()
}

impl fmt::Display for BenchmarkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or(Error::UnknownFunction(s))
    }
}
