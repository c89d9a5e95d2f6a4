use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_censorlab"));
    c.env_remove("CENSORLAB_JOBS");
    c
}

fn workdir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("censorlab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn setting2_config(dir: &Path, tau1: f64) -> PathBuf {
    let p = dir.join("config.json");
    let cfg = format!(r#"{{"mu0": 0.35, "mu1": 0.55, "sigma2": 0.1, "tau0": 5.0, "tau1": {tau1}, "seed": 3}}"#);
    fs::write(&p, cfg).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_writes_cohort_summary_and_manifest() {
    let d = workdir("simulate");
    let cfg = setting2_config(&d, 7.0);
    let out = d.join("a");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out), "--n", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("cohort.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "group,y,t,y_obs,score,x1,x2,x3,x4,x5,x6,x7,x8,x9,x10");
    assert_eq!(lines.count(), 1000);
    let summary = read_json(&out.join("summary.json"));
    let rate = |g: usize| summary["testing_rate"][g].as_f64().unwrap();
    assert!(rate(0) > rate(1), "{summary}");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["input_sha256"].as_str().unwrap().len(), 64);

    // same config and seed: identical files
    let again = d.join("b");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&again), "--n", "1000"]).status.success());
    assert_eq!(csv, fs::read_to_string(again.join("cohort.csv")).unwrap());
    assert_eq!(fs::read(out.join("summary.json")).unwrap(), fs::read(again.join("summary.json")).unwrap());
}

#[test]
fn simulate_usage_errors_exit_2() {
    let d = workdir("simulate-usage");
    let cfg = setting2_config(&d, 7.0);
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&d.join("o")), "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = d.join("bad.json");
    fs::write(&bad, r#"{"mu0": 0.35, "mu1": "high", "sigma2": 0.1, "tau0": 5, "tau1": 5}"#).unwrap();
    let o = run(&["simulate", "--config", s(&bad), "--out", s(&d.join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mu1"), "{}", stderr(&o));
    assert_eq!(run(&["simulate"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_error() {
    let d = workdir("unwritable");
    let cfg = setting2_config(&d, 5.0);
    let blocker = d.join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&blocker.join("sub")), "--n", "10"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn bundled_table_spec_has_36_rows_per_metric() {
    let d = workdir("table3");
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/setting2_table3.json");
    let o = run(&["sweep", "--spec", s(&spec), "--out", s(&d), "--realizations", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(d.join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    let per_metric = rows.iter().filter(|r| r.contains(",censored,delta_auc,")).count();
    assert_eq!(per_metric, 36);
    assert_eq!(rows.len(), 36 * 7);
    let manifest = read_json(&d.join("manifest.json"));
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["failures"].as_array().unwrap().len(), 0);
}

fn small_spec(dir: &Path) -> PathBuf {
    let p = dir.join("spec.json");
    fs::write(
        &p,
        r#"{
          "setting": 3,
          "axes": {"tau1": [5.0, 6.0], "phi": [0, 90, 180], "d_rot": [4]},
          "realizations": 2, "n_train": 300, "n_test": 2000, "master_seed": 9,
          "heatmap": {"x": "phi"}
        }"#,
    )
    .unwrap();
    p
}

#[test]
fn sweep_is_independent_of_jobs() {
    let d = workdir("jobs");
    let spec = small_spec(&d);
    let (a, b) = (d.join("a"), d.join("b"));
    assert!(run(&["sweep", "--spec", s(&spec), "--out", s(&a), "--jobs", "1"]).status.success());
    let o = bin().args(["sweep", "--spec", s(&spec), "--out", s(&b)]).env("CENSORLAB_JOBS", "4").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&b.join("manifest.json"))["jobs"], 4);
    for f in ["table.csv", "heatmap_delta_auc.csv", "heatmap_delta_auc_wide.csv", "heatmap_delta_xauc.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn heatmap_long_and_wide_agree() {
    let d = workdir("heatmap");
    let spec = small_spec(&d);
    assert!(run(&["sweep", "--spec", s(&spec), "--out", s(&d)]).status.success());
    let long = fs::read_to_string(d.join("heatmap_delta_auc.csv")).unwrap();
    let wide = fs::read_to_string(d.join("heatmap_delta_auc_wide.csv")).unwrap();
    let mut long_vals: Vec<String> = long.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect();
    let mut wide_vals: Vec<String> = wide.lines().skip(1).flat_map(|l| l.split(',').skip(2).map(String::from).collect::<Vec<_>>()).collect();
    assert_eq!(long_vals.len(), 2 * 2 * 3);
    long_vals.sort();
    wide_vals.sort();
    assert_eq!(long_vals, wide_vals);
    assert!(wide.lines().next().unwrap().ends_with("phi=0,phi=90,phi=180"));
}

#[test]
fn malformed_spec_reports_json_path() {
    let d = workdir("malformed");
    let p = d.join("spec.json");
    fs::write(&p, r#"{"setting": 2, "axes": {"tau1": [5.0, "seven"]}}"#).unwrap();
    let o = run(&["sweep", "--spec", s(&p), "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("axes.tau1[1]"), "{}", stderr(&o));
    fs::write(&p, r#"{"setting": 2, "axes": {"tau1": []}}"#).unwrap();
    assert_eq!(run(&["sweep", "--spec", s(&p), "--out", s(&d)]).status.code(), Some(2));
    fs::write(&p, r#"{"setting": 2, "bogus": 1}"#).unwrap();
    let o = run(&["sweep", "--spec", s(&p), "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn sweep_with_failures_exits_1_and_records_them() {
    let d = workdir("failing");
    let p = d.join("spec.json");
    fs::write(&p, r#"{"setting": 2, "realizations": 1, "n_train": 50, "n_test": 2}"#).unwrap();
    let o = run(&["sweep", "--spec", s(&p), "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(fs::read_to_string(d.join("table.csv")).unwrap().contains("NaN"));
    assert!(!read_json(&d.join("manifest.json"))["failures"].as_array().unwrap().is_empty());
}

/// Records with exactly `k0` of `n0` and `k1` of `n1` admissions tested.
fn write_records(path: &Path, counts: [(usize, usize); 2]) {
    let mut text = String::from("admission_id,group,cbc\n");
    let mut id = 0;
    for (g, (k, n)) in counts.into_iter().enumerate() {
        for i in 0..n {
            text.push_str(&format!("{id},{g},{}\n", (i < k) as u8));
            id += 1;
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn detect_reproduces_cbc_row() {
    let d = workdir("detect");
    let (n0, n1) = (337_630usize, 80_293usize);
    let k0 = (0.7371 * n0 as f64).round() as usize;
    let k1 = (0.6820 * n1 as f64).round() as usize;
    let rec = d.join("records.csv");
    write_records(&rec, [(k0, n0), (k1, n1)]);
    let o = run(&["detect", "--records", s(&rec), "--alpha", "0.01", "--tests", "cbc", "--out", s(&d)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = read_json(&d.join("ztests.json"));
    let z = res[0]["z"].as_f64().unwrap();
    assert!((z - 30.46).abs() < 0.1, "{z}");
    assert_eq!(res[0]["significant"], true);
    let csv = fs::read_to_string(d.join("ztests.csv")).unwrap();
    assert!(csv.starts_with("test,p0,p1,n0,n1,z,p,significant\ncbc,"));
    assert!(d.join("manifest.json").exists());
}

#[test]
fn detect_schema_errors() {
    let d = workdir("detect-schema");
    let rec = d.join("records.csv");
    fs::write(&rec, "admission_id,cbc\n1,1\n").unwrap();
    let o = run(&["detect", "--records", s(&rec), "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("group"));
    fs::write(&rec, "admission_id,group,cbc\n1,0,1\n2,1,maybe\n").unwrap();
    let o = run(&["detect", "--records", s(&rec), "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn audit_on_simulated_setting2_cohort_reports_gap_risk() {
    let d = workdir("audit");
    let cfg = setting2_config(&d, 7.0);
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&d), "--n", "4000"]).status.success());
    let o = run(&["audit", "--records", s(&d.join("cohort.csv")), "--config", s(&cfg), "--out", s(&d)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&d.join("audit.json"));
    assert_eq!(report["verdict"]["verdict"], "gap_risk", "{report}");
}

#[test]
fn theory_check_bcn_admissible() {
    let d = workdir("theory");
    let o = run(&[
        "theory", "--mu0", "4.6", "--mu1", "5.4", "--sigma2", "0.25", "--tau0", "7", "--tau1", "5", "--check-bcn", "--out", s(&d),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "admissible");
    let t = read_json(&d.join("theory.json"));
    assert!((t["tau1_bound"].as_f64().unwrap() - 4.0958).abs() < 1e-3, "{t}");
    // below the bound the flip probability jumps up at tau1
    let o = run(&["theory", "--mu0", "4.6", "--mu1", "5.4", "--sigma2", "0.25", "--tau0", "7", "--tau1", "3.5", "--check-bcn", "--out", s(&d)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("not admissible"));
    let o = run(&["theory", "--mu0", "4.6", "--mu1", "5.4", "--sigma2", "0.25", "--tau0", "5", "--tau1", "7", "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metrics_on_scored_cohort() {
    let d = workdir("metrics");
    let cfg = setting2_config(&d, 7.0);
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&d), "--n", "2000"]).status.success());
    let o = run(&["metrics", "--cohort", s(&d.join("cohort.csv")), "--out", s(&d)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_json(&d.join("metrics.json"));
    // the stored score is the true risk, which ranks every group perfectly
    assert_eq!(m["report"]["auc_0"].as_f64().unwrap(), 1.0);
    assert!(m["decomposition_residual"].as_f64().unwrap() < 1e-12);
    let stripped = d.join("noscore.csv");
    fs::write(&stripped, "group,y,t,x1\n0,1,1,0.5\n1,0,1,0.2\n").unwrap();
    assert_eq!(run(&["metrics", "--cohort", s(&stripped), "--out", s(&d)]).status.code(), Some(2));
}
