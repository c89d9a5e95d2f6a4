//! The risk model: covariates are discretized into the staircase bins,
//! one-hot encoded, and fed to an RBF-kernel SVM trained by SMO. Platt
//! scaling is optional; ranking metrics are unaffected by it.

mod encoder;
mod kernel;
mod platt;
mod smo;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use encoder::{Encoder, BINS_PER_DIM};
pub use kernel::{auto_gamma, BinKernel};
pub use platt::{fit_platt, platt_gradient, platt_objective, platt_targets, PlattParams};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::types::Cohort;
use kernel::{pack_bins, BinMatrix, KernelCache};
use smo::{SmoParams, SmoSolution};

/// Which label the model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// The condition label `y` (the oracle model).
    True,
    /// The observed label `y~ = y * t`.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub c: f64,
    /// Kernel bandwidth; `None` picks [`auto_gamma`] of the encoded data.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub platt: bool,
    pub platt_folds: usize,
    pub cache_bytes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_iter: 10_000_000,
            platt: false,
            platt_folds: 5,
            cache_bytes: 100 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportVector {
    pub bins: Vec<u8>,
    /// `alpha_i * y_i`, summed over training points sharing these bins.
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedScorer {
    pub gamma: f64,
    pub c: f64,
    pub bias: f64,
    pub encoder: Encoder,
    pub support: Vec<SupportVector>,
    pub platt: Option<PlattParams>,
    pub iterations: usize,
    /// Maximal KKT violation when the solver stopped.
    pub kkt_violation: f64,
}

impl TrainedScorer {
    pub fn kernel(&self) -> BinKernel {
        BinKernel::new(self.gamma, self.encoder.dim)
    }

    /// Raw SVM output for an already binned point.
    pub fn decision_bins(&self, kernel: &BinKernel, bins: &[u8]) -> f64 {
        self.support.iter().map(|sv| sv.coef * kernel.eval(&sv.bins, bins)).sum::<f64>() + self.bias
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.decision_bins(&self.kernel(), &self.encoder.bins(x)?))
    }

    /// Platt probability if calibrated, else the decision value.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let f = self.decision_value(x)?;
        Ok(self.platt.map_or(f, |p| p.probability(f)))
    }

    /// Scores for every patient of a cohort.
    pub fn score_cohort(&self, cohort: &Cohort) -> Result<Vec<f64>> {
        let kernel = self.kernel();
        let packed: Option<Vec<(u64, f64)>> =
            self.support.iter().map(|sv| pack_bins(&sv.bins).map(|b| (b, sv.coef))).collect();
        cohort
            .patients()
            .iter()
            .map(|p| {
                let bins = self.encoder.bins(&p.covariates)?;
                let f = match (&packed, pack_bins(&bins)) {
                    (Some(sv), Some(x)) => {
                        sv.iter().map(|&(b, coef)| coef * kernel.eval_packed(b, x)).sum::<f64>() + self.bias
                    }
                    _ => self.decision_bins(&kernel, &bins),
                };
                Ok(self.platt.map_or(f, |pp| pp.probability(f)))
            })
            .collect()
    }
}

fn encode_all(cohort: &Cohort, encoder: &Encoder) -> Result<Vec<u8>> {
    let mut bins = Vec::with_capacity(cohort.len() * encoder.dim);
    for p in cohort.patients() {
        bins.extend(encoder.bins(&p.covariates)?);
    }
    Ok(bins)
}

fn dense_from_bins(bins: &[u8], dim: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; bins.len() * BINS_PER_DIM];
    for (k, &b) in bins.iter().enumerate() {
        // k indexes (row, covariate) pairs; each owns a 6-wide block
        out[k * BINS_PER_DIM + b as usize] = 1.0;
    }
    debug_assert_eq!(out.len() % (dim * BINS_PER_DIM).max(1), 0);
    out
}

fn solve_bins(bins: &[u8], dim: usize, labels: &[bool], gamma: f64, config: &TrainConfig) -> Result<SmoSolution> {
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let mut cache = KernelCache::new(BinMatrix { bins, dim }, BinKernel::new(gamma, dim), config.cache_bytes);
    smo::solve(&mut cache, &y, &SmoParams { c: config.c, tol: config.tol, max_iter: config.max_iter })
}

fn scorer_from_solution(sol: &SmoSolution, bins: &[u8], labels: &[bool], encoder: Encoder, gamma: f64, c: f64) -> TrainedScorer {
    let dim = encoder.dim;
    let mut merged: BTreeMap<&[u8], f64> = BTreeMap::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            let coef = if labels[i] { a } else { -a };
            *merged.entry(&bins[i * dim..(i + 1) * dim]).or_insert(0.0) += coef;
        }
    }
    TrainedScorer {
        gamma,
        c,
        bias: -sol.rho,
        encoder,
        support: merged.into_iter().map(|(b, coef)| SupportVector { bins: b.to_vec(), coef }).collect(),
        platt: None,
        iterations: sol.iterations,
        kkt_violation: sol.violation,
    }
}

/// Train on binned points with the given labels.
pub fn train_bins(bins: &[u8], dim: usize, labels: &[bool], config: &TrainConfig, rng: &SimRng) -> Result<TrainedScorer> {
    if dim == 0 || bins.len() != labels.len() * dim {
        return Err(Error::DimensionMismatch { expected: labels.len() * dim, actual: bins.len() });
    }
    if !(config.c > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("C must be positive, got {}", config.c)));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::SingleClass("training labels"));
    }
    let gamma = match config.gamma {
        Some(g) => g,
        None => auto_gamma(&dense_from_bins(bins, dim), dim * BINS_PER_DIM)?,
    };
    let encoder = Encoder::new(dim);
    let sol = solve_bins(bins, dim, labels, gamma, config)?;
    let mut model = scorer_from_solution(&sol, bins, labels, encoder, gamma, config.c);
    if config.platt {
        let dec = cross_validated_decisions(bins, dim, labels, gamma, config, rng)?;
        model.platt = Some(fit_platt(&dec, labels)?);
    }
    Ok(model)
}

/// Held-out decision values from `platt_folds`-fold cross-validation with
/// folds drawn from `rng`. A fold whose training part has a single class
/// scores its held-out points `+1` or `-1` accordingly.
fn cross_validated_decisions(
    bins: &[u8],
    dim: usize,
    labels: &[bool],
    gamma: f64,
    config: &TrainConfig,
    rng: &SimRng,
) -> Result<Vec<f64>> {
    let n = labels.len();
    let k = config.platt_folds.clamp(2, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng.fork(crate::rng::streams::PLATT_FOLDS);
    for i in (1..n).rev() {
        let j = ((r.uniform() * (i + 1) as f64) as usize).min(i);
        order.swap(i, j);
    }
    let mut dec = alloc::vec![0.0; n];
    for fold in 0..k {
        let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
        let held = &order[lo..hi];
        let train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        let tb: Vec<u8> = train.iter().flat_map(|&i| bins[i * dim..(i + 1) * dim].iter().copied()).collect();
        let tl: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        if tl.iter().all(|&l| l) || !tl.iter().any(|&l| l) {
            let v = if tl[0] { 1.0 } else { -1.0 };
            for &i in held {
                dec[i] = v;
            }
            continue;
        }
        let sol = solve_bins(&tb, dim, &tl, gamma, config)?;
        let m = scorer_from_solution(&sol, &tb, &tl, Encoder::new(dim), gamma, config.c);
        let kernel = m.kernel();
        for &i in held {
            dec[i] = m.decision_bins(&kernel, &bins[i * dim..(i + 1) * dim]);
        }
    }
    Ok(dec)
}

pub fn training_labels(cohort: &Cohort, source: LabelSource) -> Vec<bool> {
    cohort
        .patients()
        .iter()
        .map(|p| match source {
            LabelSource::True => p.y,
            LabelSource::Observed => p.observed_label(),
        })
        .collect()
}

/// Train the risk model on a cohort. `rng` is only consumed for the Platt
/// cross-validation folds.
pub fn train_svm(cohort: &Cohort, labels: LabelSource, config: &TrainConfig, rng: &SimRng) -> Result<TrainedScorer> {
    let encoder = Encoder::new(cohort.dim());
    let bins = encode_all(cohort, &encoder)?;
    train_bins(&bins, cohort.dim(), &training_labels(cohort, labels), config, rng)
}
