//! Domain types shared by every module.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary patient subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum GroupId {
    Zero,
    One,
}

impl GroupId {
    pub const BOTH: [GroupId; 2] = [GroupId::Zero, GroupId::One];

    pub fn index(self) -> usize {
        match self {
            GroupId::Zero => 0,
            GroupId::One => 1,
        }
    }

    pub fn other(self) -> GroupId {
        match self {
            GroupId::Zero => GroupId::One,
            GroupId::One => GroupId::Zero,
        }
    }
}

impl TryFrom<u8> for GroupId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(GroupId::Zero),
            1 => Ok(GroupId::One),
            _ => Err(Error::InvalidConfig(format!("group must be 0 or 1, got {v}"))),
        }
    }
}

impl From<GroupId> for u8 {
    fn from(g: GroupId) -> u8 {
        g.index() as u8
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// One simulated or ingested patient.
///
/// The observed label is not stored: it is always `y && tested`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    pub group: GroupId,
    pub covariates: Vec<f64>,
    pub y: bool,
    pub tested: bool,
    /// Risk score. For simulated cohorts this is the generating score `s_a(x)`.
    pub score: f64,
}

impl Patient {
    pub fn new(group: GroupId, covariates: Vec<f64>, y: bool, tested: bool, score: f64) -> Self {
        Self { group, covariates, y, tested, score }
    }

    pub fn observed_label(&self) -> bool {
        self.y && self.tested
    }

    pub fn is_missed_positive(&self) -> bool {
        self.y && !self.tested
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    patients: Vec<Patient>,
    dim: usize,
}

impl Cohort {
    pub fn new(patients: Vec<Patient>, dim: usize) -> Result<Self> {
        if let Some(p) = patients.iter().find(|p| p.covariates.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, actual: p.covariates.len() });
        }
        Ok(Self { patients, dim })
    }

    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn group_size(&self, group: GroupId) -> usize {
        self.patients.iter().filter(|p| p.group == group).count()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.patients.iter().map(|p| p.score).collect()
    }

    /// Replace every patient's score, e.g. with model outputs.
    pub fn with_scores(mut self, scores: &[f64]) -> Result<Self> {
        if scores.len() != self.patients.len() {
            return Err(Error::DimensionMismatch { expected: self.patients.len(), actual: scores.len() });
        }
        for (p, &s) in self.patients.iter_mut().zip(scores) {
            p.score = s;
        }
        Ok(self)
    }
}

fn default_c() -> f64 {
    0.05
}
fn default_b() -> f64 {
    5.0
}
fn default_d() -> usize {
    10
}
fn default_n_train() -> usize {
    2000
}
fn default_n_test() -> usize {
    20000
}

/// Full parameterization of the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Per-dimension covariate mean for group 0.
    pub mu0: f64,
    /// Per-dimension covariate mean for group 1.
    pub mu1: f64,
    pub sigma2: f64,
    /// Censorship threshold for group 0, in risk-score units.
    pub tau0: f64,
    pub tau1: f64,
    /// Testing probability below the censorship threshold.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Decision threshold: `y = 1[s(x) > b]`.
    #[serde(default = "default_b")]
    pub b: f64,
    /// Rotation angle in degrees applied to group 1's scoring function.
    #[serde(default)]
    pub phi: f64,
    /// Number of rotated dimensions (even).
    #[serde(default)]
    pub d_rot: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationConfig {
    /// Preset for one of the three distributional settings, with no
    /// undertesting (`tau0 = tau1 = b`).
    ///
    /// Setting 1: equal means, no rotation. Setting 2: means 0.35 / 0.55.
    /// Setting 3: equal means; caller sets `phi` and `d_rot`.
    pub fn setting(setting: u8) -> Result<Self> {
        let (mu0, mu1) = match setting {
            1 | 3 => (0.45, 0.45),
            2 => (0.35, 0.55),
            other => return Err(Error::InvalidConfig(format!("unknown setting {other}"))),
        };
        Ok(Self {
            mu0,
            mu1,
            sigma2: 0.1,
            tau0: 5.0,
            tau1: 5.0,
            c: default_c(),
            b: default_b(),
            phi: 0.0,
            d_rot: 0,
            d: default_d(),
            n_train: default_n_train(),
            n_test: default_n_test(),
            seed: 0,
        })
    }

    pub fn mean(&self, group: GroupId) -> f64 {
        match group {
            GroupId::Zero => self.mu0,
            GroupId::One => self.mu1,
        }
    }

    pub fn tau(&self, group: GroupId) -> f64 {
        match group {
            GroupId::Zero => self.tau0,
            GroupId::One => self.tau1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !(self.c > 0.0 && self.c <= 1.0) {
            return bad(format!("c must lie in (0, 1], got {}", self.c));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if self.d_rot % 2 != 0 || self.d_rot > self.d {
            return bad(format!("d_rot must be even and at most d={}, got {}", self.d, self.d_rot));
        }
        if !(0.0..360.0).contains(&self.phi) {
            return bad(format!("phi must lie in [0, 360), got {}", self.phi));
        }
        if self.n_train < 2 || self.n_test < 2 {
            return bad(format!("n_train and n_test must be at least 2, got {} and {}", self.n_train, self.n_test));
        }
        for (name, v) in [("mu0", self.mu0), ("mu1", self.mu1), ("b", self.b)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.tau0.is_nan() || self.tau1.is_nan() {
            return bad("tau0 and tau1 must not be NaN".into());
        }
        Ok(())
    }

    /// True when group 1 scores through a rotated staircase.
    pub fn has_conditional_shift(&self) -> bool {
        self.d_rot > 0 && self.phi != 0.0
    }
}
