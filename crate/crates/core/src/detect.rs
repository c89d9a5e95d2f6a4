//! Detecting testing-rate disparities in observed records.
//!
//! Covers two-proportion z-tests with Bonferroni correction, two-sample
//! Kolmogorov-Smirnov tests, a grid maximum-likelihood estimate of a group's
//! censorship threshold, and an audit that walks the four conditions under
//! which disparate censorship is expected to open a ranking gap:
//!
//! 1. the marginal risk distributions differ,
//! 2. the higher-risk group is undertested,
//! 3. the conditional risk distributions differ,
//! 4. the decision and censorship boundaries are not parallel.
//!
//! A gap is expected when (1 and 2) or (3 and 4) hold.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{kolmogorov_sf, normal_two_sided_p};
use crate::synthgen::sin_cos_deg;
use crate::theory::{check_parallel_boundaries, linspace, LinearBoundaries, ParallelVerdict};
use crate::types::{Cohort, GroupId, SimulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
}

/// Two-sided z-test for equal proportions, unpooled variance:
/// `z = (p0 - p1) / sqrt(p0 (1 - p0) / n0 + p1 (1 - p1) / n1)`.
///
/// With zero variance on both sides, equal proportions give `z = 0, p = 1`
/// and unequal ones give `z = +-inf, p = 0`.
pub fn two_proportion_ztest(p0: f64, n0: u64, p1: f64, n1: u64) -> Result<ZTest> {
    if n0 == 0 || n1 == 0 {
        return Err(Error::ZeroCount);
    }
    for (i, p) in [p0, p1].into_iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange { index: i, value: p });
        }
    }
    let var = p0 * (1.0 - p0) / n0 as f64 + p1 * (1.0 - p1) / n1 as f64;
    if var == 0.0 {
        return Ok(if p0 == p1 {
            ZTest { z: 0.0, p_value: 1.0 }
        } else {
            ZTest { z: if p0 > p1 { f64::INFINITY } else { f64::NEG_INFINITY }, p_value: 0.0 }
        });
    }
    let z = (p0 - p1) / libm::sqrt(var);
    Ok(ZTest { z, p_value: normal_two_sided_p(z) })
}

/// Per-test significance threshold `alpha / m`.
pub fn bonferroni(alpha: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::ZeroCount);
    }
    Ok(alpha / m as f64)
}

/// Admission-level testing records: one row per admission, one tested flag
/// per named test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestingRecordTable {
    test_names: Vec<String>,
    ids: Vec<String>,
    groups: Vec<GroupId>,
    /// Row-major, `ids.len() * test_names.len()` flags.
    tested: Vec<bool>,
}

impl TestingRecordTable {
    pub fn new(test_names: Vec<String>) -> Self {
        Self { test_names, ids: Vec::new(), groups: Vec::new(), tested: Vec::new() }
    }

    pub fn push(&mut self, id: String, group: GroupId, flags: &[bool]) -> Result<()> {
        if flags.len() != self.test_names.len() {
            return Err(Error::DimensionMismatch { expected: self.test_names.len(), actual: flags.len() });
        }
        self.ids.push(id);
        self.groups.push(group);
        self.tested.extend_from_slice(flags);
        Ok(())
    }

    pub fn test_names(&self) -> &[String] {
        &self.test_names
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    /// Tested flags of one test, in row order.
    pub fn column(&self, test: usize) -> Vec<bool> {
        let k = self.test_names.len();
        (0..self.len()).map(|r| self.tested[r * k + test]).collect()
    }

    /// `(count, testing proportion)` per group for one test.
    pub fn proportions(&self, test: usize) -> [(u64, f64); 2] {
        let k = self.test_names.len();
        let mut n = [0u64; 2];
        let mut hits = [0u64; 2];
        for (r, g) in self.groups.iter().enumerate() {
            n[g.index()] += 1;
            hits[g.index()] += self.tested[r * k + test] as u64;
        }
        [0, 1].map(|a| (n[a], if n[a] == 0 { f64::NAN } else { hits[a] as f64 / n[a] as f64 }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTestResult {
    pub test: String,
    pub p0: f64,
    pub p1: f64,
    pub n0: u64,
    pub n1: u64,
    pub z: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Testing-rate z-test for every test in the table, each judged against
/// `alpha` Bonferroni-corrected for the number of tests.
pub fn testing_rate_tests(table: &TestingRecordTable, alpha: f64) -> Result<Vec<ZTestResult>> {
    let threshold = bonferroni(alpha, table.test_names.len())?;
    table
        .test_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let [(n0, p0), (n1, p1)] = table.proportions(i);
            let t = two_proportion_ztest(p0, n0, p1, n1)?;
            Ok(ZTestResult {
                test: name.clone(),
                p0,
                p1,
                n0,
                n1,
                z: t.z,
                p_value: t.p_value,
                significant: t.p_value < threshold,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value at
/// effective size `n0 n1 / (n0 + n1)`.
pub fn ks_two_sample(sample0: &[f64], sample1: &[f64]) -> Result<KsResult> {
    if sample0.is_empty() || sample1.is_empty() {
        return Err(Error::EmptyInput("ks_two_sample"));
    }
    let mut a = sample0.to_vec();
    let mut b = sample1.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    // step both ECDFs past each distinct value so ties move together
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = libm::sqrt(na * nb / (na + nb));
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf(en * d) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub tau_hat: f64,
    pub c_hat: f64,
    pub log_likelihood: f64,
    /// Set when the estimate sits on an edge of the search space: no
    /// observation at or below `tau_hat` (so `c` is unidentified), `tau_hat` at
    /// an end of the grid, or `c_hat = 1`.
    pub boundary: bool,
    /// Log-likelihood of the constant testing-rate model at its MLE.
    pub constant_log_likelihood: f64,
    /// `2 (log_likelihood - constant_log_likelihood)`. Non-positive or
    /// infinite values mean the threshold law fits no better than a constant
    /// rate, i.e. the data contradict it.
    pub lr_statistic: f64,
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * libm::log(y)
    }
}

/// Grid maximum likelihood for the testing law
/// `P(t = 1 | s) = 1 if s > tau else c`.
///
/// Ties in likelihood go to the smaller `tau`, then the smaller `c`.
pub fn estimate_threshold(scores: &[f64], tested: &[bool], c_grid: &[f64], tau_grid: &[f64]) -> Result<ThresholdFit> {
    if scores.len() != tested.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), actual: tested.len() });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("estimate_threshold scores"));
    }
    if c_grid.is_empty() || tau_grid.is_empty() {
        return Err(Error::EmptyInput("estimate_threshold grid"));
    }
    if let Some((i, &c)) = c_grid.iter().enumerate().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
        return Err(Error::OutOfRange { index: i, value: c });
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(tested.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // prefix counts over the sorted scores
    let mut tested_prefix = vec![0usize; pairs.len() + 1];
    for (k, p) in pairs.iter().enumerate() {
        tested_prefix[k + 1] = tested_prefix[k] + p.1 as usize;
    }
    let n = pairs.len();
    let total_tested = tested_prefix[n];

    let mut taus = tau_grid.to_vec();
    taus.sort_by(f64::total_cmp);
    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);

    let mut best: Option<(f64, f64, f64, usize)> = None;
    for &tau in &taus {
        let below = pairs.partition_point(|p| p.0 <= tau);
        let untested_above = (n - below) - (total_tested - tested_prefix[below]);
        let t_below = tested_prefix[below] as f64;
        let u_below = (below - tested_prefix[below]) as f64;
        for &c in &cs {
            let ll = if untested_above > 0 { f64::NEG_INFINITY } else { xlogy(t_below, c) + xlogy(u_below, 1.0 - c) };
            if best.map_or(true, |b| ll > b.2) {
                best = Some((tau, c, ll, below));
            }
        }
    }
    let (tau_hat, c_hat, log_likelihood, below) = best.expect("grids are nonempty");

    let rate = total_tested as f64 / n as f64;
    let constant = xlogy(total_tested as f64, rate) + xlogy((n - total_tested) as f64, 1.0 - rate);
    let boundary = below == 0 || c_hat == 1.0 || (taus.len() > 1 && (tau_hat == taus[0] || tau_hat == taus[taus.len() - 1]));
    Ok(ThresholdFit {
        tau_hat,
        c_hat,
        log_likelihood,
        boundary,
        constant_log_likelihood: constant,
        lr_statistic: 2.0 * (log_likelihood - constant),
    })
}

/// Every distinct score plus one point below the minimum: the thresholds at
/// which the likelihood can change.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if let Some(&lo) = v.first() {
        v.insert(0, lo - 1.0);
    }
    v
}

/// `c` grid used by the audit: 0.005, 0.010, ..., 1.0.
pub fn default_c_grid() -> Vec<f64> {
    (1..=200).map(|k| k as f64 * 0.005).collect()
}

/// Three-valued outcome of one audit condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Holds,
    Fails,
    Undecided,
}

impl Condition {
    fn from_bool(b: bool) -> Self {
        if b {
            Condition::Holds
        } else {
            Condition::Fails
        }
    }

    fn and(self, other: Self) -> Self {
        use Condition::*;
        match (self, other) {
            (Fails, _) | (_, Fails) => Fails,
            (Holds, Holds) => Holds,
            _ => Undecided,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum AuditVerdict {
    NoGapExpected,
    GapRisk { reason: String },
    /// Numbers (1-4) of the conditions that could not be decided.
    Inconclusive { conditions: Vec<u8> },
}

pub const REASON_UNDERTESTED: &str = "high-risk group undertested";
pub const REASON_CONDITIONAL: &str = "conditional shift with non-parallel boundaries";

/// Columns available to the audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditData {
    pub groups: Vec<GroupId>,
    pub tested: Vec<bool>,
    pub scores: Option<Vec<f64>>,
    pub covariates: Vec<(String, Vec<f64>)>,
}

impl AuditData {
    /// Covariates are named `x1..xd`; scores are the cohort's scores.
    pub fn from_cohort(cohort: &Cohort) -> Self {
        let ps = cohort.patients();
        Self {
            groups: ps.iter().map(|p| p.group).collect(),
            tested: ps.iter().map(|p| p.tested).collect(),
            scores: Some(cohort.scores()),
            covariates: (0..cohort.dim())
                .map(|k| (format!("x{}", k + 1), ps.iter().map(|p| p.covariates[k]).collect()))
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.groups.len();
        if n == 0 {
            return Err(Error::EmptyInput("audit data has no rows"));
        }
        let lens = [self.tested.len()].into_iter().chain(self.scores.as_ref().map(|s| s.len())).chain(self.covariates.iter().map(|c| c.1.len()));
        for len in lens {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, actual: len });
            }
        }
        Ok(())
    }

    fn split<'a>(&self, values: &'a [f64]) -> [Vec<f64>; 2] {
        let mut out = [Vec::new(), Vec::new()];
        for (g, &v) in self.groups.iter().zip(values) {
            out[g.index()].push(v);
        }
        out
    }
}

/// Ground truth available when auditing a simulated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub conditional_shift: bool,
    pub boundaries: Option<LinearBoundaries>,
}

/// Linearized boundaries of the simulation. Censorship runs along `1`
/// (the unrotated staircase), group 0 decides along `1` and group 1 along
/// `Rot^T 1`, the direction its rotated staircase increases fastest.
pub fn simulation_truth(config: &SimulationConfig) -> SimulationTruth {
    let d = config.d;
    let ones = vec![1.0; d];
    let mut theta1 = ones.clone();
    if config.has_conditional_shift() {
        let (s, c) = sin_cos_deg(config.phi);
        for k in (0..config.d_rot.min(d)).step_by(2) {
            // columns of R(-phi) = [[c, s], [-s, c]] summed
            theta1[k] = c - s;
            theta1[k + 1] = s + c;
        }
    }
    SimulationTruth {
        conditional_shift: config.has_conditional_shift(),
        boundaries: Some(LinearBoundaries {
            theta: ones.clone(),
            beta: -config.tau0,
            theta_a: vec![ones, theta1],
            b_a: vec![-config.b, -config.b],
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Family-wise significance level for the covariate KS tests.
    pub alpha: f64,
    /// Caller-designated high-risk group; defaults to the higher mean score.
    pub high_risk_group: Option<GroupId>,
    pub truth: Option<SimulationTruth>,
    /// Threshold grid; defaults to [`candidate_thresholds`] of the scores.
    pub tau_grid: Option<Vec<f64>>,
    pub c_grid: Vec<f64>,
    pub parallel_tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            high_risk_group: None,
            truth: None,
            tau_grid: None,
            c_grid: default_c_grid(),
            parallel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTest {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub corrected_alpha: Option<f64>,
    pub covariate_tests: Vec<CovariateTest>,
    pub high_risk_group: Option<GroupId>,
    /// Per-group threshold fits, group 0 first.
    pub thresholds: Option<[ThresholdFit; 2]>,
    pub parallel: Option<ParallelVerdict>,
    /// Conditions 1-4 in order.
    pub conditions: [Condition; 4],
    pub verdict: AuditVerdict,
}

pub fn audit(data: &AuditData, options: &AuditOptions) -> Result<AuditReport> {
    data.validate()?;

    // (1) marginal difference
    let mut covariate_tests = Vec::new();
    let mut corrected_alpha = None;
    let cond1 = if data.covariates.is_empty() {
        Condition::Undecided
    } else {
        let a = bonferroni(options.alpha, data.covariates.len())?;
        corrected_alpha = Some(a);
        for (name, values) in &data.covariates {
            let [s0, s1] = data.split(values);
            let ks = ks_two_sample(&s0, &s1)?;
            covariate_tests.push(CovariateTest {
                name: name.clone(),
                statistic: ks.statistic,
                p_value: ks.p_value,
                significant: ks.p_value < a,
            });
        }
        Condition::from_bool(covariate_tests.iter().any(|t| t.significant))
    };

    // (2) high-risk group undertested
    let mut thresholds = None;
    let mut high_risk_group = options.high_risk_group;
    let cond2 = match &data.scores {
        None => Condition::Undecided,
        Some(scores) => {
            let grid = options.tau_grid.clone().unwrap_or_else(|| candidate_thresholds(scores));
            let [s0, s1] = data.split(scores);
            let tested_by_group = {
                let mut out = [Vec::new(), Vec::new()];
                for (g, &t) in data.groups.iter().zip(&data.tested) {
                    out[g.index()].push(t);
                }
                out
            };
            let fit0 = estimate_threshold(&s0, &tested_by_group[0], &options.c_grid, &grid)?;
            let fit1 = estimate_threshold(&s1, &tested_by_group[1], &options.c_grid, &grid)?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let high = *high_risk_group.get_or_insert(if mean(&s1) > mean(&s0) { GroupId::One } else { GroupId::Zero });
            let fits = [fit0, fit1];
            thresholds = Some(fits);
            Condition::from_bool(fits[high.index()].tau_hat > fits[high.other().index()].tau_hat)
        }
    };

    // (3) conditional difference and (4) non-parallel boundaries
    let cond3 = options.truth.as_ref().map_or(Condition::Undecided, |t| Condition::from_bool(t.conditional_shift));
    let mut parallel = None;
    let cond4 = match options.truth.as_ref().and_then(|t| t.boundaries.as_ref()) {
        None => Condition::Undecided,
        Some(b) => {
            let v = check_parallel_boundaries(b, options.parallel_tol)?;
            let holds = matches!(v, ParallelVerdict::NotParallel { .. });
            parallel = Some(v);
            Condition::from_bool(holds)
        }
    };

    let conditions = [cond1, cond2, cond3, cond4];
    let marginal_path = cond1.and(cond2);
    let conditional_path = cond3.and(cond4);
    let verdict = if marginal_path == Condition::Holds {
        AuditVerdict::GapRisk { reason: REASON_UNDERTESTED.into() }
    } else if conditional_path == Condition::Holds {
        AuditVerdict::GapRisk { reason: REASON_CONDITIONAL.into() }
    } else if marginal_path == Condition::Fails && conditional_path == Condition::Fails {
        AuditVerdict::NoGapExpected
    } else {
        let conditions = (1..=4u8).filter(|&k| conditions[k as usize - 1] == Condition::Undecided).collect();
        AuditVerdict::Inconclusive { conditions }
    };

    Ok(AuditReport { corrected_alpha, covariate_tests, high_risk_group, thresholds, parallel, conditions, verdict })
}

/// Evenly spaced threshold grid, exposed for callers that want a fixed grid
/// instead of the data-driven default.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = libm::round((hi - lo) / step) as usize + 1;
    linspace(lo, hi, n)
}
