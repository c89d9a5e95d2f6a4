//! Synthetic cohort generator.
//!
//! Per patient in group `a`:
//!
//! ```text
//! x  ~ clip(N(mu_a * 1, sigma2 * I), 0, 1)
//! y  = 1[s_a(x) > b]
//! t  = 1[s_a(x) > tau_a]  or  Bernoulli(c)
//! y~ = y * t
//! ```
//!
//! with the staircase score `s(x) = (1/5) * sum_i ceil(5 x_i)`. Group 1 scores
//! through `s(Rot(x))` when a rotation is configured.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::types::{Cohort, GroupId, Patient, SimulationConfig};

/// Bins per unit interval of the staircase.
pub const STAIRCASE_BINS: f64 = 5.0;

/// Rotation center used by the data-generating process (per coordinate).
pub const ROTATION_CENTER: f64 = 0.4;

const CEIL_REL_EPS: f64 = 1e-12;

/// `ceil(5 v)`, with `5 v` nudged down by a relative 1e-12 so that values a
/// rounding error above a bin edge fall into the lower bin. Bin edges carry
/// zero probability mass under continuous sampling; the nudge only pins down
/// the exact-rational answer at those edges.
pub fn bin_index(v: f64) -> i64 {
    let t = STAIRCASE_BINS * v;
    libm::ceil(t - CEIL_REL_EPS * t.abs().max(1.0)) as i64
}

/// `(1/5) * sum_i ceil(5 x_i)`.
///
/// Inputs outside `[0, 1]` are accepted: rotated covariates leave the unit cube
/// and still need a score.
pub fn staircase_score(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyInput("staircase input has dimension 0"));
    }
    let total: i64 = x.iter().map(|&v| bin_index(v)).sum();
    Ok(total as f64 / STAIRCASE_BINS)
}

/// Block rotation `R(-phi)` applied to consecutive pairs of the first `d_rot`
/// coordinates, about `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSpec {
    pub phi_deg: f64,
    pub d_rot: usize,
    pub center: Vec<f64>,
}

impl RotationSpec {
    /// Rotation about `0.4 * 1`.
    pub fn new(phi_deg: f64, d_rot: usize) -> Self {
        Self { phi_deg, d_rot, center: alloc::vec![ROTATION_CENTER; d_rot] }
    }

    pub fn from_config(cfg: &SimulationConfig) -> Self {
        Self::new(cfg.phi, cfg.d_rot)
    }

    pub fn is_identity(&self) -> bool {
        self.d_rot == 0 || libm::fmod(self.phi_deg, 360.0) == 0.0
    }
}

/// Sine and cosine of an angle in degrees, exact at multiples of 90.
pub(crate) fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let r = libm::fmod(deg, 360.0);
    let r = if r < 0.0 { r + 360.0 } else { r };
    match r {
        x if x == 0.0 => (0.0, 1.0),
        x if x == 90.0 => (1.0, 0.0),
        x if x == 180.0 => (0.0, -1.0),
        x if x == 270.0 => (-1.0, 0.0),
        _ => {
            let rad = r.to_radians();
            (libm::sin(rad), libm::cos(rad))
        }
    }
}

pub fn rotate(x: &[f64], spec: &RotationSpec) -> Result<Vec<f64>> {
    if spec.d_rot % 2 != 0 {
        return Err(Error::OddRotation(spec.d_rot));
    }
    if x.len() < spec.d_rot {
        return Err(Error::DimensionMismatch { expected: spec.d_rot, actual: x.len() });
    }
    if spec.center.len() < spec.d_rot {
        return Err(Error::DimensionMismatch { expected: spec.d_rot, actual: spec.center.len() });
    }
    let mut out = x.to_vec();
    if spec.is_identity() {
        return Ok(out);
    }
    let (s, c) = sin_cos_deg(spec.phi_deg);
    for k in (0..spec.d_rot).step_by(2) {
        let u = x[k] - spec.center[k];
        let v = x[k + 1] - spec.center[k + 1];
        // R(-phi) = [[cos, sin], [-sin, cos]]
        out[k] = c * u + s * v + spec.center[k];
        out[k + 1] = -s * u + c * v + spec.center[k + 1];
    }
    Ok(out)
}

/// One covariate vector for `group`: `d` independent `N(mu_a, sigma2)` draws
/// clipped to `[0, 1]`.
pub fn sample_covariates(rng: &mut SimRng, group: GroupId, config: &SimulationConfig) -> Vec<f64> {
    let mu = config.mean(group);
    let sd = libm::sqrt(config.sigma2);
    (0..config.d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (mu + sd * z).clamp(0.0, 1.0)
        })
        .collect()
}

/// The generating risk score `s_a(x)` for a patient of `group`.
pub fn group_score(x: &[f64], group: GroupId, config: &SimulationConfig) -> Result<f64> {
    match group {
        GroupId::One if config.has_conditional_shift() => {
            staircase_score(&rotate(x, &RotationSpec::from_config(config))?)
        }
        _ => staircase_score(x),
    }
}

/// Draw a cohort of `n` patients: `ceil(n/2)` in group 0 followed by
/// `floor(n/2)` in group 1.
///
/// The label follows the group's score `s_a(x)`; testing follows the
/// unrotated staircase `s(x)` for both groups. Rotation moves group 1's
/// decision boundary while the censorship boundary stays put, which is what
/// pushes group-1 positives below it. The stored score is `s_a(x)`.
///
/// Every patient consumes `d` normal draws and one uniform regardless of the
/// configuration, so two configs sharing an rng seed share covariate noise.
pub fn generate_cohort(config: &SimulationConfig, n: usize, rng: &mut SimRng) -> Result<Cohort> {
    config.validate()?;
    if n < 2 {
        return Err(Error::InvalidConfig(alloc::format!("cohort size must be at least 2, got {n}")));
    }
    let n0 = n - n / 2;
    let mut patients = Vec::with_capacity(n);
    for i in 0..n {
        let group = if i < n0 { GroupId::Zero } else { GroupId::One };
        let x = sample_covariates(rng, group, config);
        let coin = rng.uniform();
        let score = group_score(&x, group, config)?;
        let risk = if config.has_conditional_shift() { staircase_score(&x)? } else { score };
        let y = score > config.b;
        let tested = risk > config.tau(group) || coin < config.c;
        patients.push(Patient::new(group, x, y, tested, score));
    }
    Cohort::new(patients, config.d)
}

/// Fraction of true positives whose label was censored (`y = 1`, `y~ = 0`).
/// `group = None` pools both groups.
pub fn missed_positive_rate(cohort: &Cohort, group: Option<GroupId>) -> Result<f64> {
    let (mut pos, mut missed) = (0usize, 0usize);
    for p in cohort.patients().iter().filter(|p| group.map_or(true, |g| p.group == g)) {
        if p.y {
            pos += 1;
            if !p.tested {
                missed += 1;
            }
        }
    }
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    Ok(missed as f64 / pos as f64)
}

/// `P_a(t = 0)`: fraction of the group that was never tested.
pub fn censorship_rate(cohort: &Cohort, group: GroupId) -> Result<f64> {
    let members: Vec<&Patient> = cohort.patients().iter().filter(|p| p.group == group).collect();
    if members.is_empty() {
        return Err(Error::EmptyInput("group has no patients"));
    }
    Ok(members.iter().filter(|p| !p.tested).count() as f64 / members.len() as f64)
}

/// `P_a(t = 1)`.
pub fn testing_rate(cohort: &Cohort, group: GroupId) -> Result<f64> {
    censorship_rate(cohort, group).map(|r| 1.0 - r)
}
