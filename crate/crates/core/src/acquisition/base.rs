//! Base-posterior quantities of a set of points and their reverse-mode
//! adjoint with respect to the point coordinates.
//!
//! Tree objectives only touch the training data through
//! `μ₀(p) = c + W_pᵀ β` and `C₀(p, p') = k(p, p') − W_pᵀ W_p'` with
//! `W = R⁺ K(X, P)`. Everything downstream is small scalar algebra that runs
//! on the [`Tape`](crate::autodiff::Tape); this layer maps the resulting
//! adjoints of `μ₀` and `C₀` back to the coordinates of `P`.

use nalgebra::DMatrix;

use crate::gp::kernel::{self, matern52_grad_second};
use crate::gp::GpModel;

pub(crate) struct BaseFeatures {
    points: Vec<Vec<f64>>,
    /// `r × N`
    w: DMatrix<f64>,
    pub mu0: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub c0: Vec<f64>,
}

impl BaseFeatures {
    /// Posterior means of every point and posterior covariances of the
    /// requested index pairs (diagonal pairs allowed).
    pub fn new(model: &GpModel, points: Vec<Vec<f64>>, pairs: Vec<(usize, usize)>) -> Self {
        let hp = model.hyperparams();
        let w = model.whitened_cross(&points);
        let beta = model.whitened();
        let c = hp.mean_constant;
        let mu0 = (0..points.len())
            .map(|p| c + w.column(p).dot(beta))
            .collect();
        let c0 = pairs
            .iter()
            .map(|&(a, b)| {
                kernel::matern52(&points[a], &points[b], &hp.lengthscales, hp.signal_variance)
                    - w.column(a).dot(&w.column(b))
            })
            .collect();
        Self {
            points,
            w,
            mu0,
            pairs,
            c0,
        }
    }

    /// Coordinate gradients given `∂f/∂μ₀` per point and `∂f/∂C₀` per pair.
    pub fn backprop(&self, model: &GpModel, mu_bar: &[f64], c0_bar: &[f64]) -> Vec<Vec<f64>> {
        let hp = model.hyperparams();
        let (ls, sf) = (&hp.lengthscales, hp.signal_variance);
        let d = hp.dim();
        let n_pts = self.points.len();
        let r = self.w.nrows();
        let mut grads = vec![vec![0.0; d]; n_pts];
        let mut w_bar = DMatrix::<f64>::zeros(r, n_pts);
        let beta = model.whitened();
        for p in 0..n_pts {
            if mu_bar[p] != 0.0 {
                let mut col = w_bar.column_mut(p);
                col.axpy(mu_bar[p], beta, 1.0);
            }
        }
        for (&(a, b), &g) in self.pairs.iter().zip(c0_bar) {
            if g == 0.0 {
                continue;
            }
            if a == b {
                // k(p, p) is constant
                let wa = self.w.column(a).clone_owned();
                w_bar.column_mut(a).axpy(-2.0 * g, &wa, 1.0);
                continue;
            }
            let wa = self.w.column(a).clone_owned();
            let wb = self.w.column(b).clone_owned();
            w_bar.column_mut(a).axpy(-g, &wb, 1.0);
            w_bar.column_mut(b).axpy(-g, &wa, 1.0);
            // ∂k(a, b)/∂b and ∂k(a, b)/∂a = −∂k(a, b)/∂b
            let mut gb = vec![0.0; d];
            matern52_grad_second(&self.points[a], &self.points[b], ls, sf, g, &mut gb);
            for i in 0..d {
                grads[b][i] += gb[i];
                grads[a][i] -= gb[i];
            }
        }
        if r > 0 {
            let k_bar = model.root_pinv().tr_mul(&w_bar);
            let train = model.train_rows();
            for p in 0..n_pts {
                for (i, xi) in train.iter().enumerate() {
                    let g = k_bar[(i, p)];
                    if g != 0.0 {
                        matern52_grad_second(xi, &self.points[p], ls, sf, g, &mut grads[p]);
                    }
                }
            }
        }
        grads
    }
}
