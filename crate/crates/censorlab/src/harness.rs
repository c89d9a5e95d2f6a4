//! Experiment sweeps: a Cartesian grid of simulation configs, each run for a
//! number of realizations with an oracle and/or censored-label model.
//!
//! Work units are `(cell, realization)` pairs scheduled on a rayon pool.
//! Results are collected in unit order, so outputs do not depend on the
//! number of threads.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use censorlab_core::classifier::{train_svm, LabelSource, TrainConfig};
use censorlab_core::metrics::{empirical_ci, gap_report, CiSummary, GapReport};
use censorlab_core::rng::streams;
use censorlab_core::synthgen::{censorship_rate, generate_cohort, missed_positive_rate};
use censorlab_core::{derive_realization_seed, GroupId, SimRng, SimulationConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::io::write_csv;

/// Which label sources to train on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLabels {
    True,
    Observed,
    #[default]
    Both,
}

impl TrainLabels {
    pub fn models(self) -> &'static [Model] {
        match self {
            TrainLabels::True => &[Model::Oracle],
            TrainLabels::Observed => &[Model::Censored],
            TrainLabels::Both => &[Model::Oracle, Model::Censored],
        }
    }
}

/// Oracle models see the true label `y`, censored models the observed `y~`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Oracle,
    Censored,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Oracle => "oracle",
            Model::Censored => "censored",
        }
    }

    fn labels(self) -> LabelSource {
        match self {
            Model::Oracle => LabelSource::True,
            Model::Censored => LabelSource::Observed,
        }
    }
}

/// Value lists to sweep. Omitted axes take the setting's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub tau0: Option<Vec<f64>>,
    pub tau1: Option<Vec<f64>>,
    pub phi: Option<Vec<f64>>,
    pub d_rot: Option<Vec<usize>>,
    /// Mean gap `mu1 - mu0` at fixed `mu0 + mu1 = 0.9` (Setting 2 only).
    pub delta_mu: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
}

pub const AXIS_NAMES: [&str; 6] = ["tau0", "tau1", "phi", "d_rot", "delta_mu", "sigma2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapSpec {
    /// Sweep axis on the x side; the y side is the empirical `P_1(t = 0)`.
    pub x: String,
    #[serde(default = "default_heatmap_metrics")]
    pub metrics: Vec<String>,
}

fn default_heatmap_metrics() -> Vec<String> {
    vec!["delta_auc".into(), "delta_xauc".into()]
}

fn default_realizations() -> usize {
    100
}
fn default_n_train() -> usize {
    2000
}
fn default_n_test() -> usize {
    20000
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub setting: u8,
    #[serde(default)]
    pub axes: Axes,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub train_labels: TrainLabels,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Override the setting's group means (incompatible with `delta_mu`).
    pub mu0: Option<f64>,
    pub mu1: Option<f64>,
    #[serde(default)]
    pub train: TrainConfig,
    pub heatmap: Option<HeatmapSpec>,
}

impl ExperimentSpec {
    /// Spec with every default and the given setting.
    pub fn new(setting: u8) -> Self {
        Self {
            setting,
            axes: Axes::default(),
            realizations: default_realizations(),
            n_train: default_n_train(),
            n_test: default_n_test(),
            master_seed: 0,
            train_labels: TrainLabels::Both,
            c: default_c(),
            b: default_b(),
            d: default_d(),
            mu0: None,
            mu1: None,
            train: TrainConfig::default(),
            heatmap: None,
        }
    }

    /// Grid cells in lexicographic order of (tau0, tau1, phi, d_rot,
    /// delta_mu, sigma2), last axis fastest.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let usage = |m: String| Err(AppError::Usage(m));
        let base = SimulationConfig::setting(self.setting).map_err(|e| AppError::Usage(e.to_string()))?;
        if self.realizations == 0 {
            return usage("realizations must be positive".into());
        }
        let a = &self.axes;
        for (name, len) in [
            ("tau0", a.tau0.as_ref().map(Vec::len)),
            ("tau1", a.tau1.as_ref().map(Vec::len)),
            ("phi", a.phi.as_ref().map(Vec::len)),
            ("d_rot", a.d_rot.as_ref().map(Vec::len)),
            ("delta_mu", a.delta_mu.as_ref().map(Vec::len)),
            ("sigma2", a.sigma2.as_ref().map(Vec::len)),
        ] {
            if len == Some(0) {
                return usage(format!("axes.{name} is empty"));
            }
        }
        if self.setting == 3 && (a.phi.is_none() || a.d_rot.is_none()) {
            return usage("setting 3 requires axes.phi and axes.d_rot".into());
        }
        if self.setting != 3 {
            let rotated = a.phi.iter().flatten().any(|&p| p != 0.0) || a.d_rot.iter().flatten().any(|&d| d != 0);
            if rotated {
                return usage(format!("setting {} has no rotation; phi and d_rot must be 0", self.setting));
            }
        }
        if a.delta_mu.is_some() {
            if self.setting != 2 {
                return usage("axes.delta_mu applies to setting 2 only".into());
            }
            if self.mu0.is_some() || self.mu1.is_some() {
                return usage("axes.delta_mu cannot be combined with mu0/mu1".into());
            }
        }
        let tau0 = a.tau0.clone().unwrap_or(vec![base.tau0]);
        let tau1 = a.tau1.clone().unwrap_or(vec![base.tau1]);
        let phi = a.phi.clone().unwrap_or(vec![0.0]);
        let d_rot = a.d_rot.clone().unwrap_or(vec![0]);
        let delta_mu: Vec<Option<f64>> = match &a.delta_mu {
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let sigma2 = a.sigma2.clone().unwrap_or(vec![base.sigma2]);

        let mut cells = Vec::new();
        for &t0 in &tau0 {
            for &t1 in &tau1 {
                for &ph in &phi {
                    for &dr in &d_rot {
                        for &dm in &delta_mu {
                            for &s2 in &sigma2 {
                                let mut cfg = base.clone();
                                cfg.tau0 = t0;
                                cfg.tau1 = t1;
                                cfg.phi = ph;
                                cfg.d_rot = dr;
                                cfg.sigma2 = s2;
                                cfg.c = self.c;
                                cfg.b = self.b;
                                cfg.d = self.d;
                                cfg.n_train = self.n_train;
                                cfg.n_test = self.n_test;
                                cfg.seed = self.master_seed;
                                if let Some(m) = self.mu0 {
                                    cfg.mu0 = m;
                                }
                                if let Some(m) = self.mu1 {
                                    cfg.mu1 = m;
                                }
                                if let Some(dm) = dm {
                                    cfg.mu0 = (0.9 - dm) / 2.0;
                                    cfg.mu1 = (0.9 + dm) / 2.0;
                                }
                                cfg.validate().map_err(|e| AppError::Usage(format!("cell {}: {e}", cells.len())))?;
                                cells.push(Cell { config: cfg, delta_mu: dm });
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub config: SimulationConfig,
    pub delta_mu: Option<f64>,
}

impl Cell {
    /// Value of a sweep axis for this cell.
    pub fn axis(&self, name: &str) -> Option<f64> {
        let c = &self.config;
        Some(match name {
            "tau0" => c.tau0,
            "tau1" => c.tau1,
            "phi" => c.phi,
            "d_rot" => c.d_rot as f64,
            "delta_mu" => self.delta_mu.unwrap_or(c.mu1 - c.mu0),
            "sigma2" => c.sigma2,
            _ => return None,
        })
    }
}

/// Test-cohort rates that do not depend on the model, as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortRates {
    pub missed_positive_0: f64,
    pub missed_positive_1: f64,
    pub missed_positive_overall: f64,
    pub censorship_rate_0: f64,
    pub censorship_rate_1: f64,
}

impl CohortRates {
    fn as_array(&self) -> [f64; 5] {
        [
            self.missed_positive_0,
            self.missed_positive_1,
            self.missed_positive_overall,
            self.censorship_rate_0,
            self.censorship_rate_1,
        ]
    }
}

/// Outcome of one realization of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationOutcome {
    pub realization: u64,
    pub rates: Option<CohortRates>,
    /// One entry per model, in [`TrainLabels::models`] order.
    pub reports: Vec<std::result::Result<GapReport, String>>,
}

fn rate_or_nan(r: censorlab_core::Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// Runs one realization: fresh train and test cohorts from the derived
/// seed, one model per label source, metrics on the true test labels.
pub fn run_realization(
    config: &SimulationConfig,
    models: &[Model],
    train: &TrainConfig,
    realization: u64,
) -> RealizationOutcome {
    let rng = SimRng::new(derive_realization_seed(config.seed, realization));
    let fail_all = |msg: String| RealizationOutcome {
        realization,
        rates: None,
        reports: models.iter().map(|_| Err(msg.clone())).collect(),
    };
    let train_cohort = match generate_cohort(config, config.n_train, &mut rng.fork(streams::TRAIN_COHORT)) {
        Ok(c) => c,
        Err(e) => return fail_all(format!("realization {realization}: train cohort: {e}")),
    };
    let test_cohort = match generate_cohort(config, config.n_test, &mut rng.fork(streams::TEST_COHORT)) {
        Ok(c) => c,
        Err(e) => return fail_all(format!("realization {realization}: test cohort: {e}")),
    };
    let rates = CohortRates {
        missed_positive_0: rate_or_nan(missed_positive_rate(&test_cohort, Some(GroupId::Zero))),
        missed_positive_1: rate_or_nan(missed_positive_rate(&test_cohort, Some(GroupId::One))),
        missed_positive_overall: rate_or_nan(missed_positive_rate(&test_cohort, None)),
        censorship_rate_0: rate_or_nan(censorship_rate(&test_cohort, GroupId::Zero)),
        censorship_rate_1: rate_or_nan(censorship_rate(&test_cohort, GroupId::One)),
    };
    let reports = models
        .iter()
        .map(|m| {
            let scored = train_svm(&train_cohort, m.labels(), train, &rng)
                .and_then(|model| model.score_cohort(&test_cohort))
                .and_then(|s| test_cohort.clone().with_scores(&s))
                .and_then(|c| gap_report(&c));
            scored.map_err(|e| format!("realization {realization}: {} model: {e}", m.name()))
        })
        .collect();
    RealizationOutcome { realization, rates: Some(rates), reports }
}

/// Runs realizations `indices` of one config sequentially.
pub fn run_cell(config: &SimulationConfig, train_labels: TrainLabels, train: &TrainConfig, indices: &[u64]) -> Vec<RealizationOutcome> {
    indices.iter().map(|&r| run_realization(config, train_labels.models(), train, r)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub outcomes: Vec<RealizationOutcome>,
}

impl CellResult {
    /// Successful reports of one model, in realization order.
    pub fn reports(&self, model_index: usize) -> Vec<GapReport> {
        self.outcomes.iter().filter_map(|o| o.reports[model_index].as_ref().ok().copied()).collect()
    }

    pub fn failures(&self, model_index: usize) -> Vec<String> {
        self.outcomes.iter().filter_map(|o| o.reports[model_index].as_ref().err().cloned()).collect()
    }

    /// Mean test-cohort rates over realizations (NaN entries skipped).
    pub fn mean_rates(&self) -> [f64; 5] {
        let mut sum = [0.0; 5];
        let mut n = [0usize; 5];
        for r in self.outcomes.iter().filter_map(|o| o.rates) {
            for (k, v) in r.as_array().into_iter().enumerate() {
                if !v.is_nan() {
                    sum[k] += v;
                    n[k] += 1;
                }
            }
        }
        std::array::from_fn(|k| if n[k] == 0 { f64::NAN } else { sum[k] / n[k] as f64 })
    }

    /// Median and interval of a metric in percentage points; NaN when no
    /// realization succeeded.
    pub fn summary(&self, model_index: usize, metric: &str) -> CiSummary {
        let values: Vec<f64> = self
            .reports(model_index)
            .iter()
            .filter_map(|r| r.ranking_metrics().into_iter().find(|(n, _)| *n == metric).map(|(_, v)| v))
            .collect();
        empirical_ci(&values)
            .map(|s| s.scaled(100.0))
            .unwrap_or(CiSummary { median: f64::NAN, lower: f64::NAN, upper: f64::NAN })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: ExperimentSpec,
    pub models: Vec<Model>,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn failures(&self) -> Vec<String> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (0..self.models.len()).flat_map(move |m| c.failures(m).into_iter().map(move |f| format!("cell {i}: {f}"))))
            .collect()
    }

    pub fn model_index(&self, model: Model) -> Option<usize> {
        self.models.iter().position(|&m| m == model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub jobs: usize,
    /// Report each finished cell on stderr.
    pub progress: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { jobs: 1, progress: false }
    }
}

pub fn run_sweep(spec: &ExperimentSpec, options: SweepOptions) -> Result<SweepResult> {
    let cells = spec.cells()?;
    let models = spec.train_labels.models();
    let r = spec.realizations as u64;
    let units: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| (0..r).map(move |i| (c, i))).collect();
    let remaining: Vec<AtomicUsize> = cells.iter().map(|_| AtomicUsize::new(spec.realizations)).collect();
    let done_cells = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| AppError::Usage(format!("thread pool: {e}")))?;
    let outcomes: Vec<RealizationOutcome> = pool.install(|| {
        units
            .par_iter()
            .map(|&(c, i)| {
                let out = run_realization(&cells[c].config, models, &spec.train, i);
                if remaining[c].fetch_sub(1, Ordering::SeqCst) == 1 && options.progress {
                    let k = done_cells.fetch_add(1, Ordering::SeqCst) + 1;
                    eprintln!("cell {c} done ({k}/{})", cells.len());
                }
                out
            })
            .collect()
    });
    let mut it = outcomes.into_iter();
    let cells = cells
        .into_iter()
        .map(|cell| CellResult { cell, outcomes: it.by_ref().take(spec.realizations).collect() })
        .collect();
    Ok(SweepResult { spec: spec.clone(), models: models.to_vec(), cells })
}

pub const METRICS: [&str; 7] = ["auc_overall", "auc_0", "auc_1", "xauc_01", "xauc_10", "delta_auc", "delta_xauc"];

fn num(v: f64) -> String {
    v.to_string()
}

/// One row per (cell, model, metric). Metric and rate columns are in
/// percentage points.
pub fn table_rows(result: &SweepResult) -> (Vec<String>, Vec<Vec<String>>) {
    let header: Vec<String> = [
        "setting", "tau0", "tau1", "phi", "d_rot", "mu0", "mu1", "sigma2", "model", "metric", "median", "ci_lo", "ci_hi",
        "missed_positive_0", "missed_positive_1", "missed_positive_overall", "censorship_rate_0", "censorship_rate_1",
        "n_ok", "failures",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for cr in &result.cells {
        let c = &cr.cell.config;
        let rates = cr.mean_rates().map(|v| num(v * 100.0));
        for (mi, model) in result.models.iter().enumerate() {
            let n_ok = cr.reports(mi).len();
            let failures = cr.outcomes.len() - n_ok;
            for metric in METRICS {
                let s = cr.summary(mi, metric);
                let mut row = vec![
                    result.spec.setting.to_string(),
                    num(c.tau0),
                    num(c.tau1),
                    num(c.phi),
                    c.d_rot.to_string(),
                    num(c.mu0),
                    num(c.mu1),
                    num(c.sigma2),
                    model.name().to_string(),
                    metric.to_string(),
                    num(s.median),
                    num(s.lower),
                    num(s.upper),
                ];
                row.extend(rates.iter().cloned());
                row.push(n_ok.to_string());
                row.push(failures.to_string());
                rows.push(row);
            }
        }
    }
    (header, rows)
}

pub fn write_table(result: &SweepResult, path: &Path) -> Result<()> {
    let (header, rows) = table_rows(result);
    write_csv(path, &header, &rows)
}

/// Heatmap cells: `(model, x, y, median)` with y the cell's mean
/// `P_1(t = 0)`, plus the pivoted form keyed by the remaining axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub long: Vec<(Model, f64, f64, f64)>,
    pub x_values: Vec<f64>,
    /// `(model, row label y, medians by x)`; rows are the distinct
    /// combinations of the other axes, y their mean `P_1(t = 0)`.
    pub wide: Vec<(Model, f64, Vec<f64>)>,
}

pub fn heatmap(result: &SweepResult, metric: &str, x_axis: &str) -> Result<Heatmap> {
    if !METRICS.contains(&metric) {
        return Err(AppError::Usage(format!("unknown metric '{metric}'")));
    }
    if !AXIS_NAMES.contains(&x_axis) {
        return Err(AppError::Usage(format!("unknown axis '{x_axis}'")));
    }
    let mut long = Vec::new();
    let mut x_values: Vec<f64> = Vec::new();
    for cr in &result.cells {
        let x = cr.cell.axis(x_axis).expect("known axis");
        if !x_values.contains(&x) {
            x_values.push(x);
        }
    }
    x_values.sort_by(f64::total_cmp);
    let mut wide = Vec::new();
    for (mi, &model) in result.models.iter().enumerate() {
        // rows keyed by the bit patterns of the other axes, in grid order
        let mut rows: BTreeMap<Vec<u64>, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (ci, cr) in result.cells.iter().enumerate() {
            let x = cr.cell.axis(x_axis).expect("known axis");
            let y = cr.mean_rates()[4] * 100.0;
            let median = cr.summary(mi, metric).median;
            long.push((model, x, y, median));
            let key: Vec<u64> =
                AXIS_NAMES.iter().filter(|&&a| a != x_axis).map(|a| cr.cell.axis(a).expect("known axis").to_bits()).collect();
            let entry = rows.entry(key).or_insert_with(|| (ci, vec![f64::NAN; x_values.len()], Vec::new()));
            let col = x_values.iter().position(|&v| v == x).expect("collected");
            entry.1[col] = median;
            entry.2.push(y);
        }
        let mut ordered: Vec<_> = rows.into_values().collect();
        ordered.sort_by_key(|r| r.0);
        for (_, medians, ys) in ordered {
            let y = ys.iter().sum::<f64>() / ys.len() as f64;
            wide.push((model, y, medians));
        }
    }
    Ok(Heatmap { long, x_values, wide })
}

/// Writes `heatmap_<metric>.csv` (long) and `heatmap_<metric>_wide.csv`;
/// returns the file names.
pub fn write_heatmap(result: &SweepResult, metric: &str, x_axis: &str, dir: &Path) -> Result<Vec<String>> {
    let h = heatmap(result, metric, x_axis)?;
    let long_name = format!("heatmap_{metric}.csv");
    let wide_name = format!("heatmap_{metric}_wide.csv");
    let header = vec!["model".to_string(), x_axis.to_string(), "censorship_rate_1".to_string(), "median".to_string()];
    let rows: Vec<Vec<String>> =
        h.long.iter().map(|&(m, x, y, v)| vec![m.name().to_string(), num(x), num(y), num(v)]).collect();
    write_csv(&dir.join(&long_name), &header, &rows)?;
    let mut header = vec!["model".to_string(), "censorship_rate_1".to_string()];
    header.extend(h.x_values.iter().map(|x| format!("{x_axis}={x}")));
    let rows: Vec<Vec<String>> = h
        .wide
        .iter()
        .map(|(m, y, meds)| {
            let mut r = vec![m.name().to_string(), num(*y)];
            r.extend(meds.iter().map(|&v| num(v)));
            r
        })
        .collect();
    write_csv(&dir.join(&wide_name), &header, &rows)?;
    Ok(vec![long_name, wide_name])
}
