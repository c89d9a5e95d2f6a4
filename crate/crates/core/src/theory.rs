//! Executable versions of the theoretical objects: the undertesting measure,
//! the flip probability of a positive label under threshold censorship,
//! boundary-consistent-noise (BCN) admissibility, the feasibility bound on
//! `tau1`, the parallel-boundaries condition and the marginal KL divergence.
//!
//! Every function-valued condition is checked on a caller-supplied grid.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::sigmoid;

/// Group-wise testing probabilities on a common risk grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub grid: Vec<f64>,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
}

impl RiskProfile {
    pub fn new(grid: Vec<f64>, p0: Vec<f64>, p1: Vec<f64>) -> Result<Self> {
        if p0.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: p0.len() });
        }
        if p1.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: p1.len() });
        }
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidConfig("risk grid must be sorted".into()));
        }
        if let Some((i, &v)) = p0.iter().chain(&p1).enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { index: i % grid.len().max(1), value: v });
        }
        Ok(Self { grid, p0, p1 })
    }

    /// Testing curves of the threshold law: `P_a(t | r) = 1` above `tau_a`,
    /// `c` at or below it.
    pub fn threshold_curves(grid: Vec<f64>, tau0: f64, tau1: f64, c: f64) -> Result<Self> {
        let curve = |tau: f64| grid.iter().map(|&r| if r > tau { 1.0 } else { c }).collect::<Vec<_>>();
        let (p0, p1) = (curve(tau0), curve(tau1));
        Self::new(grid, p0, p1)
    }
}

/// `integral max(0, P0(t|r) - P1(t|r)) dr` by the trapezoid rule.
///
/// Positive values mean group 1 is undertested relative to group 0; swap the
/// curves for the other direction.
pub fn undertesting_level(profile: &RiskProfile) -> Result<f64> {
    if profile.grid.len() < 2 {
        return Err(Error::EmptyInput("risk grid needs at least two points"));
    }
    let gap: Vec<f64> = profile.p0.iter().zip(&profile.p1).map(|(a, b)| (a - b).max(0.0)).collect();
    Ok(profile
        .grid
        .windows(2)
        .zip(gap.windows(2))
        .map(|(r, g)| 0.5 * (r[1] - r[0]) * (g[0] + g[1]))
        .sum())
}

/// Closed-form undertesting of group 1 under the threshold law,
/// `max(0, (1 - c) (tau1 - tau0))`.
pub fn threshold_undertesting(tau0: f64, tau1: f64, c: f64) -> f64 {
    ((1.0 - c) * (tau1 - tau0)).max(0.0)
}

/// Homoscedastic Gaussian score marginals per group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMarginals {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma2: f64,
    /// `P(A = 0)`.
    pub p_a: f64,
    pub c: f64,
}

impl GaussianMarginals {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.p_a > 0.0 && self.p_a < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!("p_a must lie in (0, 1), got {}", self.p_a)));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!("c must lie in (0, 1], got {}", self.c)));
        }
        Ok(())
    }

    /// Logit of the middle branch:
    /// `g(z) = log(p_a / ((1 - p_a)(1 - c))) + (2z - mu0 - mu1)(mu0 - mu1) / (2 sigma2)`.
    pub fn flip_logit(&self, z: f64) -> f64 {
        libm::log(self.p_a / ((1.0 - self.p_a) * (1.0 - self.c)))
            + (2.0 * z - self.mu0 - self.mu1) * (self.mu0 - self.mu1) / (2.0 * self.sigma2)
    }
}

/// Probability that a positive label is flipped at score `z`:
/// `1 - c` below `tau1`, `sigmoid(g(z))` on `[tau1, tau0)`, `0` from `tau0` on.
pub fn flip_probability(z: f64, g: &GaussianMarginals, tau0: f64, tau1: f64) -> Result<f64> {
    if tau1 > tau0 {
        return Err(Error::ThresholdOrientation { tau0, tau1 });
    }
    Ok(if z < tau1 {
        1.0 - g.c
    } else if z < tau0 {
        sigmoid(g.flip_logit(z))
    } else {
        0.0
    })
}

/// The value of `tau1` at which the middle branch meets the lower branch,
/// i.e. the root of `sigmoid(g(tau1)) = 1 - c`:
///
/// `tau1* = log((1 - c)^2 (1 - p_a) / (c p_a)) * sigma2 / (mu0 - mu1) + (mu0 + mu1) / 2`.
///
/// For `mu1 > mu0` the middle branch is decreasing, so the flip probability is
/// non-increasing across `tau1` exactly when `tau1 >= tau1*`. At `c = 1` the
/// log term diverges and the result is `+inf` (or `-inf` for `mu1 < mu0`).
pub fn tau1_bound(g: &GaussianMarginals) -> Result<f64> {
    if g.mu0 == g.mu1 {
        return Err(Error::EqualMeans);
    }
    let log_term = libm::log((1.0 - g.c) * (1.0 - g.c) * (1.0 - g.p_a) / (g.c * g.p_a));
    Ok(log_term * g.sigma2 / (g.mu0 - g.mu1) + 0.5 * (g.mu0 + g.mu1))
}

/// A label-noise model `(f0, f1, s, eta)` over instances of type `X`.
pub struct NoiseModel<'a, X> {
    /// Flip probability of a negative label, as a function of the score.
    pub f0: &'a dyn Fn(f64) -> f64,
    /// Flip probability of a positive label, as a function of the score.
    pub f1: &'a dyn Fn(f64) -> f64,
    pub scorer: &'a dyn Fn(&X) -> f64,
    /// Class probability `P(Y = 1 | x)`.
    pub eta: &'a dyn Fn(&X) -> f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcnCondition {
    FeasibleRanking,
    PiecewiseMonotonicity,
    FlipProbabilityMonotonicity,
    /// `f0 + f1 < 1`.
    NoiseBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum BcnVerdict {
    Admissible,
    /// `location` is the score at which the violation was found.
    Violated { condition: BcnCondition, location: f64 },
}

impl BcnVerdict {
    pub fn is_admissible(&self) -> bool {
        matches!(self, BcnVerdict::Admissible)
    }
}

/// Slack allowed in monotonicity comparisons, absorbing rounding noise.
pub const MONOTONE_TOL: f64 = 1e-12;

/// Check the BCN conditions on `grid`, in order: feasible ranking,
/// piecewise monotonicity, flip-probability monotonicity, noise budget.
/// Returns the first violation found.
pub fn check_bcn_admissible<X>(model: &NoiseModel<'_, X>, grid: &[X]) -> BcnVerdict {
    struct Point {
        z: f64,
        eta: f64,
        f0: f64,
        f1: f64,
    }
    let mut pts: Vec<Point> = grid
        .iter()
        .map(|x| {
            let z = (model.scorer)(x);
            Point { z, eta: (model.eta)(x), f0: (model.f0)(z), f1: (model.f1)(z) }
        })
        .collect();
    pts.sort_by(|a, b| a.z.total_cmp(&b.z));
    let violated = |condition, location| BcnVerdict::Violated { condition, location };

    // feasible ranking: eta(x) < eta(x') must imply s(x) < s(x'); along
    // ascending scores eta is non-decreasing and constant on score ties
    let mut prev_max = f64::NEG_INFINITY;
    let mut i = 0;
    while i < pts.len() {
        let mut j = i;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        while j < pts.len() && pts[j].z == pts[i].z {
            lo = lo.min(pts[j].eta);
            hi = hi.max(pts[j].eta);
            j += 1;
        }
        if lo != hi || lo < prev_max {
            return violated(BcnCondition::FeasibleRanking, pts[i].z);
        }
        prev_max = hi;
        i = j;
    }

    // piecewise monotonicity on each eta region separately
    for f in [|p: &Point| p.f0, |p: &Point| p.f1] {
        let mut last_low: Option<f64> = None;
        let mut last_high: Option<f64> = None;
        for p in &pts {
            let v = f(p);
            if p.eta <= 0.5 {
                if matches!(last_low, Some(prev) if v < prev - MONOTONE_TOL) {
                    return violated(BcnCondition::PiecewiseMonotonicity, p.z);
                }
                last_low = Some(v);
            } else {
                if matches!(last_high, Some(prev) if v > prev + MONOTONE_TOL) {
                    return violated(BcnCondition::PiecewiseMonotonicity, p.z);
                }
                last_high = Some(v);
            }
        }
    }

    for w in pts.windows(2) {
        if (w[1].f1 - w[1].f0) > (w[0].f1 - w[0].f0) + MONOTONE_TOL {
            return violated(BcnCondition::FlipProbabilityMonotonicity, w[1].z);
        }
    }

    if let Some(p) = pts.iter().find(|p| !(p.f0 + p.f1 < 1.0)) {
        return violated(BcnCondition::NoiseBudget, p.z);
    }
    BcnVerdict::Admissible
}

/// BCN check for threshold censorship of a deterministic label on a 1-D score:
/// `s(z) = z`, `eta(z) = 1[z > b]`, `f0 = 0`, `f1 = flip_probability`.
pub fn check_threshold_censoring(
    g: &GaussianMarginals,
    tau0: f64,
    tau1: f64,
    b: f64,
    grid: &[f64],
) -> Result<BcnVerdict> {
    g.validate()?;
    if tau1 > tau0 {
        return Err(Error::ThresholdOrientation { tau0, tau1 });
    }
    let f0 = |_: f64| 0.0;
    let f1 = |z: f64| flip_probability(z, g, tau0, tau1).unwrap_or(f64::NAN);
    let scorer = |z: &f64| *z;
    let eta = |z: &f64| if *z > b { 1.0 } else { 0.0 };
    Ok(check_bcn_admissible(&NoiseModel { f0: &f0, f1: &f1, scorer: &scorer, eta: &eta }, grid))
}

/// Linear censorship boundary `theta . x + beta > 0` and per-group decision
/// boundaries `theta_a . x + b_a > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBoundaries {
    pub theta: Vec<f64>,
    pub beta: f64,
    pub theta_a: Vec<Vec<f64>>,
    pub b_a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ParallelVerdict {
    /// `theta_a = delta_a * theta` with `delta_a > 0` for every group.
    Parallel { deltas: Vec<f64> },
    NotParallel { group: usize },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Whether each group's decision direction is a positive multiple of the
/// censorship direction, up to relative residual `tol`.
pub fn check_parallel_boundaries(lb: &LinearBoundaries, tol: f64) -> Result<ParallelVerdict> {
    let norm2 = dot(&lb.theta, &lb.theta);
    if !(norm2 > 0.0) {
        return Err(Error::InvalidConfig("censorship direction theta must be nonzero".into()));
    }
    let norm = libm::sqrt(norm2);
    let mut deltas = Vec::with_capacity(lb.theta_a.len());
    for (group, ta) in lb.theta_a.iter().enumerate() {
        if ta.len() != lb.theta.len() {
            return Err(Error::DimensionMismatch { expected: lb.theta.len(), actual: ta.len() });
        }
        let ta_norm = libm::sqrt(dot(ta, ta));
        if ta_norm == 0.0 {
            return Ok(ParallelVerdict::NotParallel { group });
        }
        let proj = dot(ta, &lb.theta) / norm;
        let resid2: f64 = ta.iter().zip(&lb.theta).map(|(a, t)| {
            let r = a - proj * t / norm;
            r * r
        }).sum();
        if proj <= 0.0 || libm::sqrt(resid2) / ta_norm > tol {
            return Ok(ParallelVerdict::NotParallel { group });
        }
        deltas.push(proj / norm);
    }
    Ok(ParallelVerdict::Parallel { deltas })
}

/// KL divergence between `N(mu0, sigma2 I)` and `N(mu1, sigma2 I)`:
/// `||mu1 - mu0||^2 / (2 sigma2)`.
pub fn marginal_kl(mu0: &[f64], mu1: &[f64], sigma2: f64) -> Result<f64> {
    if mu0.len() != mu1.len() {
        return Err(Error::DimensionMismatch { expected: mu0.len(), actual: mu1.len() });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("sigma2 must be positive, got {sigma2}")));
    }
    let d2: f64 = mu0.iter().zip(mu1).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(d2 / (2.0 * sigma2))
}

/// Evenly spaced grid of `n >= 2` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n.max(2) - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}
