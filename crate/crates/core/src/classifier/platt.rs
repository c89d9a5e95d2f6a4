//! Platt scaling: `P(y = 1 | f) = 1 / (1 + exp(A f + B))`, fit by Newton's
//! method with backtracking on the regularized log-likelihood.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn probability(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        if z >= 0.0 {
            let e = libm::exp(-z);
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + libm::exp(z))
        }
    }
}

/// Smoothed targets `(N+ + 1) / (N+ + 2)` for positives, `1 / (N- + 2)` for
/// negatives.
pub fn platt_targets(labels: &[bool]) -> Vec<f64> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    labels.iter().map(|&l| if l { hi } else { lo }).collect()
}

/// Negative log-likelihood of the targets under parameters `(a, b)`.
pub fn platt_objective(dec: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    dec.iter()
        .zip(targets)
        .map(|(&f, &t)| {
            let z = f * a + b;
            if z >= 0.0 {
                t * z + libm::log1p(libm::exp(-z))
            } else {
                (t - 1.0) * z + libm::log1p(libm::exp(z))
            }
        })
        .sum()
}

/// Gradient of [`platt_objective`] with respect to `(a, b)`.
pub fn platt_gradient(dec: &[f64], targets: &[f64], a: f64, b: f64) -> (f64, f64) {
    let (mut ga, mut gb) = (0.0, 0.0);
    for (&f, &t) in dec.iter().zip(targets) {
        let p = PlattParams { a, b }.probability(f);
        let d = t - p;
        ga += f * d;
        gb += d;
    }
    (ga, gb)
}

pub fn fit_platt(dec: &[f64], labels: &[bool]) -> Result<PlattParams> {
    if dec.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: dec.len(), actual: labels.len() });
    }
    if dec.is_empty() {
        return Err(Error::EmptyInput("platt decision values"));
    }
    const MAX_ITER: usize = 100;
    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    const EPS: f64 = 1e-5;

    let targets = platt_targets(labels);
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut a = 0.0;
    let mut b = libm::log((neg + 1.0) / (pos + 1.0));
    let mut fval = platt_objective(dec, &targets, a, b);

    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21) = (SIGMA, SIGMA, 0.0);
        for &f in dec {
            let p = PlattParams { a, b }.probability(f);
            let d2 = p * (1.0 - p);
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
        }
        let (g1, g2) = platt_gradient(dec, &targets, a, b);
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_objective(dec, &targets, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    Ok(PlattParams { a, b })
}
