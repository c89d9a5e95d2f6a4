//! Sequential minimal optimization for the C-SVM dual
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a   s.t.  0 <= a_i <= C,  y^T a = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! Each step updates the maximal violating pair. Ties in the pair selection go
//! to the lowest index.

use alloc::vec;
use alloc::vec::Vec;

use super::kernel::KernelCache;
use crate::error::{Error, Result};

/// Floor for non-positive curvature along the working pair.
const TAU: f64 = 1e-12;

pub(crate) struct SmoParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final `max violation` (gap between the pair-selection extremes).
    pub violation: f64,
}

/// `1/2 a^T (G - e)`, the primal-form objective recovered from the gradient.
fn objective(alpha: &[f64], grad: &[f64]) -> f64 {
    0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

pub(crate) fn solve(cache: &mut KernelCache<'_>, y: &[f64], params: &SmoParams) -> Result<SmoSolution> {
    let n = cache.len();
    debug_assert_eq!(y.len(), n);
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    let mut last_obj = objective(&alpha, &grad);

    loop {
        // i maximizes -y G over I_up, j minimizes it over I_low
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { !is_upper(alpha[t]) } else { !is_lower(alpha[t]) };
            let low = if y[t] > 0.0 { !is_lower(alpha[t]) } else { !is_upper(alpha[t]) };
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        let violation = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || violation <= params.tol {
            let rho = compute_rho(&alpha, &grad, y, c);
            return Ok(SmoSolution { alpha, rho, iterations, violation: violation.max(0.0) });
        }
        if iterations >= params.max_iter {
            return Err(Error::NotConverged { iterations, violation });
        }
        iterations += 1;

        let ki = cache.row(i);
        let kj = cache.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ai, aj) = update_pair(old_i, old_j, y[i], y[j], grad[i], grad[j], ki[i], kj[j], ki[j], c);
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for k in 0..n {
            grad[k] += y[k] * (y[i] * ki[k] * di + y[j] * kj[k] * dj);
        }

        if cfg!(debug_assertions) {
            debug_assert!(alpha.iter().all(|&a| (0.0..=c).contains(&a)));
            let obj = objective(&alpha, &grad);
            debug_assert!(obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()), "objective rose: {last_obj} -> {obj}");
            last_obj = obj;
        }
    }
}

/// Analytic minimization along the pair `(i, j)`, clipped to the box.
#[allow(clippy::too_many_arguments)]
fn update_pair(ai: f64, aj: f64, yi: f64, yj: f64, gi: f64, gj: f64, kii: f64, kjj: f64, kij: f64, c: f64) -> (f64, f64) {
    let (mut ai, mut aj) = (ai, aj);
    if yi != yj {
        let quad = (kii + kjj + 2.0 * kij).max(TAU);
        let delta = (-gi - gj) / quad;
        let diff = ai - aj;
        ai += delta;
        aj += delta;
        if diff > 0.0 {
            if aj < 0.0 {
                aj = 0.0;
                ai = diff;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = -diff;
        }
        if diff > 0.0 {
            if ai > c {
                ai = c;
                aj = c - diff;
            }
        } else if aj > c {
            aj = c;
            ai = c + diff;
        }
    } else {
        let quad = (kii + kjj - 2.0 * kij).max(TAU);
        let delta = (gi - gj) / quad;
        let sum = ai + aj;
        ai -= delta;
        aj += delta;
        if sum > c {
            if ai > c {
                ai = c;
                aj = sum - c;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > c {
            if aj > c {
                aj = c;
                ai = sum - c;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
    }
    (ai.clamp(0.0, c), aj.clamp(0.0, c))
}

/// Offset `rho` (decision value is `sum a_i y_i K(x_i, x) - rho`): the mean of
/// `y G` over free variables, else the midpoint of the feasible interval.
fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    }
}
