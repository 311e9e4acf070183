//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every elementary operation as a node holding at most
//! two parent indices and the local partial derivatives. [`Tape::gradient`]
//! sweeps the nodes backwards once and returns the adjoint of every node.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::stats::{norm_cdf, norm_pdf};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Operation record.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar living on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, #{})", self.value, self.index)
    }
}

/// Adjoints of every node, indexed by [`Var::index`].
pub struct Adjoints(Vec<f64>);

impl Adjoints {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.0[v.index as usize]
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    fn push(&self, value: f64, parents: [u32; 2], partials: [f64; 2]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node { parents, partials });
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// New independent input.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, [NONE, NONE], [0.0, 0.0])
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reverse sweep seeded with d(output)/d(output) = 1.
    pub fn gradient(&self, output: Var<'_>) -> Adjoints {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[output.index as usize] = 1.0;
        for i in (0..=output.index as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NONE {
                    adj[p as usize] += a * node.partials[k];
                }
            }
        }
        Adjoints(adj)
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    fn unary(self, value: f64, d: f64) -> Var<'t> {
        self.tape.push(value, [self.index, NONE], [d, 0.0])
    }

    fn binary(self, other: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        self.tape
            .push(value, [self.index, other.index], [da, db])
    }

    /// Constant on the same tape.
    pub fn constant(self, value: f64) -> Var<'t> {
        self.tape.push(value, [NONE, NONE], [0.0, 0.0])
    }

    pub fn sqrt(self) -> Var<'t> {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }

    /// `sqrt(max(self, floor))`, with zero derivative below the floor.
    pub fn sqrt_floored(self, floor: f64) -> Var<'t> {
        if self.value <= floor {
            self.constant(floor.sqrt())
        } else {
            self.sqrt()
        }
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(self.value * self.value, 2.0 * self.value)
    }

    /// Larger of two values; ties route the derivative to `self`.
    pub fn max(self, other: Var<'t>) -> Var<'t> {
        if self.value >= other.value {
            self.binary(other, self.value, 1.0, 0.0)
        } else {
            self.binary(other, other.value, 0.0, 1.0)
        }
    }

    pub fn max_const(self, c: f64) -> Var<'t> {
        if self.value >= c {
            self.unary(self.value, 1.0)
        } else {
            self.constant(c)
        }
    }

    /// `z Φ(z) + φ(z)`, the standardized expected-improvement kernel.
    pub fn ei_kernel(self) -> Var<'t> {
        let z = self.value;
        let cdf = norm_cdf(z);
        self.unary(z * cdf + norm_pdf(z), cdf)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let q = self.value / rhs.value;
        self.binary(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(self - rhs.value, -1.0)
    }
}

/// Sum of a slice of variables (`zero` is returned for an empty slice).
pub fn sum<'t>(zero: Var<'t>, vars: &[Var<'t>]) -> Var<'t> {
    vars.iter().fold(zero, |acc, &v| acc + v)
}
