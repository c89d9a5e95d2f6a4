//! CSV and JSON file formats.
//!
//! Cohort CSV: `group,y,t,y_obs,score,x1..xd` with 0/1 flags. Testing
//! records: `admission_id,group,<test>...`, one 0/1 column per test. Audit
//! tables: `group` plus `tested` (or `t`), optional `score`, and any number of
//! numeric covariate columns.

use std::fs;
use std::path::{Path, PathBuf};

use censorlab_core::detect::{AuditData, TestingRecordTable, ZTestResult};
use censorlab_core::{Cohort, GroupId, Patient};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

/// Stop collecting cell errors after this many.
const MAX_REPORTED: usize = 20;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        AppError::Usage(format!("{}: invalid at `{at}`: {}", what.display(), e.inner()))
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> AppError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(path, io),
        other => AppError::Schema(format!("{}: {other:?}", path.display())),
    }
}

/// Writes rows of string cells under `header`.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

pub fn write_cohort_csv(path: &Path, cohort: &Cohort) -> Result<()> {
    let mut header: Vec<String> = ["group", "y", "t", "y_obs", "score"].map(String::from).to_vec();
    header.extend((1..=cohort.dim()).map(|k| format!("x{k}")));
    let rows: Vec<Vec<String>> = cohort
        .patients()
        .iter()
        .map(|p| {
            let mut r = vec![p.group.to_string(), flag(p.y), flag(p.tested), flag(p.observed_label()), p.score.to_string()];
            r.extend(p.covariates.iter().map(f64::to_string));
            r
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Accumulates per-cell problems so a bad file is reported in one go.
struct Problems {
    path: PathBuf,
    list: Vec<String>,
    total: usize,
}

impl Problems {
    fn new(path: &Path) -> Self {
        Self { path: path.to_path_buf(), list: Vec::new(), total: 0 }
    }

    fn push(&mut self, line: u64, msg: String) {
        self.total += 1;
        if self.list.len() < MAX_REPORTED {
            self.list.push(format!("row {line}: {msg}"));
        }
    }

    fn finish(self) -> Result<()> {
        if self.total == 0 {
            return Ok(());
        }
        let more = if self.total > self.list.len() { format!("\n({} more)", self.total - self.list.len()) } else { String::new() };
        Err(AppError::Schema(format!("{}:\n{}{more}", self.path.display(), self.list.join("\n"))))
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

fn parse_group(s: &str) -> Option<GroupId> {
    match s.trim() {
        "0" => Some(GroupId::Zero),
        "1" => Some(GroupId::One),
        _ => None,
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_err(path, e))?;
        let headers = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self { headers, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, path: &Path, names: &[&str]) -> Result<Vec<usize>> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| self.col(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(AppError::Schema(format!("{}: missing column(s) {}", path.display(), missing.join(", "))));
        }
        Ok(names.iter().map(|n| self.col(n).expect("checked")).collect())
    }
}

/// `x1, x2, ...` columns in numeric order; must be contiguous from 1.
fn covariate_columns(table: &Table, path: &Path) -> Result<Vec<usize>> {
    let mut xs: Vec<(usize, usize)> = table
        .headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()).map(|k| (k, i)))
        .collect();
    xs.sort_unstable();
    if xs.is_empty() || xs.iter().enumerate().any(|(j, &(k, _))| k != j + 1) {
        return Err(AppError::Schema(format!("{}: covariate columns must be x1..xd", path.display())));
    }
    Ok(xs.into_iter().map(|(_, i)| i).collect())
}

/// Reads a cohort CSV. Scores are taken from the `score` column when
/// present (second return value), else set to NaN.
pub fn read_cohort_csv(path: &Path) -> Result<(Cohort, bool)> {
    let table = Table::read(path)?;
    let req = table.require(path, &["group", "y", "t"])?;
    let score_col = table.col("score");
    let xs = covariate_columns(&table, path)?;
    let mut problems = Problems::new(path);
    let mut patients = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let group = parse_group(&rec[req[0]]);
        let y = parse_flag(&rec[req[1]]);
        let t = parse_flag(&rec[req[2]]);
        if group.is_none() {
            problems.push(*line, format!("group must be 0 or 1, got '{}'", &rec[req[0]]));
        }
        for (v, c) in [(y, req[1]), (t, req[2])] {
            if v.is_none() {
                problems.push(*line, format!("{} must be 0 or 1, got '{}'", table.headers[c], &rec[c]));
            }
        }
        let score = match score_col {
            Some(c) => rec[c].parse::<f64>().unwrap_or_else(|_| {
                problems.push(*line, format!("score is not a number: '{}'", &rec[c]));
                f64::NAN
            }),
            None => f64::NAN,
        };
        let mut x = Vec::with_capacity(xs.len());
        for &c in &xs {
            match rec[c].parse::<f64>() {
                Ok(v) => x.push(v),
                Err(_) => problems.push(*line, format!("{} is not a number: '{}'", table.headers[c], &rec[c])),
            }
        }
        if let (Some(g), Some(y), Some(t)) = (group, y, t) {
            if x.len() == xs.len() {
                patients.push(Patient::new(g, x, y, t, score));
            }
        }
    }
    problems.finish()?;
    Ok((Cohort::new(patients, xs.len())?, score_col.is_some()))
}

/// Reads testing records. `tests` selects a subset of the test columns
/// (default: every column other than `admission_id` and `group`).
pub fn read_records_csv(path: &Path, tests: Option<&[String]>) -> Result<TestingRecordTable> {
    let table = Table::read(path)?;
    let req = table.require(path, &["admission_id", "group"])?;
    let names: Vec<String> = match tests {
        Some(t) => t.to_vec(),
        None => table.headers.iter().filter(|h| *h != "admission_id" && *h != "group").cloned().collect(),
    };
    if names.is_empty() {
        return Err(AppError::Schema(format!("{}: no test columns", path.display())));
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let cols = table.require(path, &name_refs)?;
    let mut out = TestingRecordTable::new(names);
    let mut problems = Problems::new(path);
    for (line, rec) in &table.rows {
        let group = parse_group(&rec[req[1]]);
        if group.is_none() {
            problems.push(*line, format!("group must be 0 or 1, got '{}'", &rec[req[1]]));
        }
        let mut flags = Vec::with_capacity(cols.len());
        for &c in &cols {
            match parse_flag(&rec[c]) {
                Some(f) => flags.push(f),
                None => problems.push(*line, format!("{} must be 0 or 1, got '{}'", table.headers[c], &rec[c])),
            }
        }
        if let Some(g) = group {
            if flags.len() == cols.len() {
                out.push(rec[req[0]].to_string(), g, &flags)?;
            }
        }
    }
    problems.finish()?;
    Ok(out)
}

/// Columns that are never treated as covariates in an audit table.
const NON_COVARIATES: [&str; 7] = ["admission_id", "group", "tested", "t", "score", "y", "y_obs"];

pub fn read_audit_csv(path: &Path) -> Result<AuditData> {
    let table = Table::read(path)?;
    let group_col = table.require(path, &["group"])?[0];
    let tested_col = table
        .col("tested")
        .or_else(|| table.col("t"))
        .ok_or_else(|| AppError::Schema(format!("{}: missing column(s) tested (or t)", path.display())))?;
    let score_col = table.col("score");
    let cov_cols: Vec<usize> =
        (0..table.headers.len()).filter(|&i| !NON_COVARIATES.contains(&table.headers[i].as_str())).collect();
    let mut problems = Problems::new(path);
    let mut data = AuditData {
        groups: Vec::new(),
        tested: Vec::new(),
        scores: score_col.map(|_| Vec::new()),
        covariates: cov_cols.iter().map(|&c| (table.headers[c].clone(), Vec::new())).collect(),
    };
    for (line, rec) in &table.rows {
        let before = problems.total;
        let group = parse_group(&rec[group_col]);
        if group.is_none() {
            problems.push(*line, format!("group must be 0 or 1, got '{}'", &rec[group_col]));
        }
        let tested = parse_flag(&rec[tested_col]);
        if tested.is_none() {
            problems.push(*line, format!("{} must be 0 or 1, got '{}'", table.headers[tested_col], &rec[tested_col]));
        }
        let mut nums = Vec::new();
        for &c in score_col.iter().chain(&cov_cols) {
            match rec[c].parse::<f64>() {
                Ok(v) => nums.push(v),
                Err(_) => problems.push(*line, format!("{} is not a number: '{}'", table.headers[c], &rec[c])),
            }
        }
        if problems.total > before {
            continue;
        }
        data.groups.push(group.expect("checked"));
        data.tested.push(tested.expect("checked"));
        let mut it = nums.into_iter();
        if let Some(s) = data.scores.as_mut() {
            s.push(it.next().expect("score parsed"));
        }
        for (cov, v) in data.covariates.iter_mut().zip(it) {
            cov.1.push(v);
        }
    }
    problems.finish()?;
    Ok(data)
}

pub fn write_ztests_csv(path: &Path, results: &[ZTestResult]) -> Result<()> {
    let header = ["test", "p0", "p1", "n0", "n1", "z", "p", "significant"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.test.clone(),
                r.p0.to_string(),
                r.p1.to_string(),
                r.n0.to_string(),
                r.n1.to_string(),
                r.z.to_string(),
                r.p_value.to_string(),
                flag(r.significant),
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the input spec or config file, hex encoded.
    pub input_sha256: Option<String>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub failures: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_sha256: None,
            seed: None,
            jobs: None,
            wall_time_seconds: 0.0,
            outputs: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
