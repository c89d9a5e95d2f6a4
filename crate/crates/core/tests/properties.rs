use censorlab_core::classifier::{train_svm, LabelSource, TrainConfig};
use censorlab_core::detect::{
    audit, estimate_threshold, simulation_truth, testing_rate_tests, two_proportion_ztest, AuditData, AuditOptions,
    AuditVerdict, TestingRecordTable,
};
use censorlab_core::metrics::{auc, decomposition_residual, gap_report, xauc, ClassGroupWeights};
use censorlab_core::synthgen::{generate_cohort, missed_positive_rate, testing_rate};
use censorlab_core::{Cohort, GroupId, Patient, SimRng, SimulationConfig};
use proptest::prelude::*;

fn cohort_from(rows: &[(bool, bool, f64)]) -> Cohort {
    let patients = rows
        .iter()
        .map(|&(g, y, s)| Patient::new(if g { GroupId::One } else { GroupId::Zero }, vec![0.5], y, true, s))
        .collect();
    Cohort::new(patients, 1).unwrap()
}

/// Rows guaranteed to hold both classes in both groups.
fn scored_rows() -> impl Strategy<Value = Vec<(bool, bool, f64)>> {
    prop::collection::vec((any::<bool>(), any::<bool>(), prop_oneof![(0..6u8).prop_map(f64::from), -10.0f64..10.0]), 16..120)
        .prop_map(|mut v| {
            v[0].0 = false;
            v[0].1 = false;
            v[1].0 = false;
            v[1].1 = true;
            v[2].0 = true;
            v[2].1 = false;
            v[3].0 = true;
            v[3].1 = true;
            v
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_holds(rows in scored_rows()) {
        let c = cohort_from(&rows);
        let r = gap_report(&c).unwrap();
        let w = ClassGroupWeights::from_cohort(&c).unwrap();
        prop_assert!(decomposition_residual(&r, &w).unwrap() <= 1e-12);
    }

    #[test]
    fn flipping_scores_complements_auc(rows in scored_rows()) {
        let scores: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a + auc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xauc_of_a_group_with_itself_is_auc(rows in scored_rows()) {
        let c = cohort_from(&rows);
        let r = gap_report(&c).unwrap();
        let pos: Vec<f64> = c.patients().iter().filter(|p| p.group == GroupId::One && p.y).map(|p| p.score).collect();
        let neg: Vec<f64> = c.patients().iter().filter(|p| p.group == GroupId::One && !p.y).map(|p| p.score).collect();
        prop_assert_eq!(xauc(&pos, &neg).unwrap(), r.auc_1);
        prop_assert!((r.delta_auc - (r.auc_1 - r.auc_0).abs()).abs() < 1e-15);
    }

    #[test]
    fn increasing_transforms_keep_metrics(rows in scored_rows()) {
        let c = cohort_from(&rows);
        let base = gap_report(&c).unwrap();
        let moved: Vec<f64> = c.scores().iter().map(|s| s.exp()).collect();
        let other = gap_report(&c.clone().with_scores(&moved).unwrap()).unwrap();
        prop_assert_eq!(base.ranking_metrics(), other.ranking_metrics());
    }

    #[test]
    fn ztest_is_antisymmetric(p0 in 0.01f64..0.99, p1 in 0.01f64..0.99, n0 in 10u64..100_000, n1 in 10u64..100_000) {
        let a = two_proportion_ztest(p0, n0, p1, n1).unwrap();
        let b = two_proportion_ztest(p1, n1, p0, n0).unwrap();
        prop_assert!((a.z + b.z).abs() < 1e-12);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
    }
}

#[test]
fn higher_threshold_misses_more_group_one_positives() {
    let mut cfg = SimulationConfig::setting(2).unwrap();
    cfg.tau1 = 7.0;
    let c = generate_cohort(&cfg, 20_000, &mut SimRng::new(11)).unwrap();
    let m0 = missed_positive_rate(&c, Some(GroupId::Zero)).unwrap();
    let m1 = missed_positive_rate(&c, Some(GroupId::One)).unwrap();
    assert_eq!(m0, 0.0);
    assert!(m1 > 0.3, "{m1}");
    assert!(testing_rate(&c, GroupId::Zero).unwrap() > testing_rate(&c, GroupId::One).unwrap());
}

#[test]
fn oracle_model_ranks_well_and_censoring_hurts_group_one() {
    let mut cfg = SimulationConfig::setting(2).unwrap();
    cfg.tau1 = 7.0;
    let rng = SimRng::new(4);
    let train = generate_cohort(&cfg, 2000, &mut rng.fork(1)).unwrap();
    let test = generate_cohort(&cfg, 5000, &mut rng.fork(2)).unwrap();
    let eval = |labels| {
        let m = train_svm(&train, labels, &TrainConfig::default(), &rng).unwrap();
        gap_report(&test.clone().with_scores(&m.score_cohort(&test).unwrap()).unwrap()).unwrap()
    };
    let oracle = eval(LabelSource::True);
    let censored = eval(LabelSource::Observed);
    assert!(oracle.auc_overall > 0.95, "{oracle:?}");
    assert!(oracle.delta_auc < 0.02, "{oracle:?}");
    assert!(censored.delta_auc > oracle.delta_auc + 0.02, "{censored:?}");
}

#[test]
fn equal_testing_rates_rarely_significant() {
    let mut significant_runs = 0;
    for seed in 0..100u64 {
        let mut rng = SimRng::new(seed);
        let mut t = TestingRecordTable::new(vec!["a".into(), "b".into(), "c".into()]);
        for i in 0..2000 {
            let g = if i % 3 == 0 { GroupId::One } else { GroupId::Zero };
            let flags = [rng.uniform() < 0.3, rng.uniform() < 0.5, rng.uniform() < 0.05];
            t.push(i.to_string(), g, &flags).unwrap();
        }
        let res = testing_rate_tests(&t, 0.01).unwrap();
        significant_runs += res.iter().any(|r| r.significant) as usize;
    }
    assert!(significant_runs <= 5, "{significant_runs}");
}

#[test]
fn threshold_fit_on_simulated_testing() {
    let mut cfg = SimulationConfig::setting(1).unwrap();
    cfg.tau0 = 5.6;
    cfg.tau1 = 5.6;
    let c = generate_cohort(&cfg, 20_000, &mut SimRng::new(8)).unwrap();
    let tested: Vec<bool> = c.patients().iter().map(|p| p.tested).collect();
    let taus: Vec<f64> = (0..=50).map(|k| 3.0 + 0.1 * k as f64).collect();
    let cs: Vec<f64> = (1..=100).map(|k| k as f64 * 0.01).collect();
    let fit = estimate_threshold(&c.scores(), &tested, &cs, &taus).unwrap();
    // scores sit on a 0.2 lattice, so the largest untested score is 5.6 itself
    assert!((fit.tau_hat - 5.6).abs() < 1e-9, "{fit:?}");
    assert!((fit.c_hat - 0.05).abs() <= 0.01, "{fit:?}");
    assert!(!fit.boundary && fit.lr_statistic > 0.0);
}

#[test]
fn audit_flags_setting_two_and_setting_three() {
    let mut cfg = SimulationConfig::setting(2).unwrap();
    cfg.tau1 = 7.0;
    let c = generate_cohort(&cfg, 4000, &mut SimRng::new(1)).unwrap();
    let options = AuditOptions { truth: Some(simulation_truth(&cfg)), ..AuditOptions::default() };
    let r = audit(&AuditData::from_cohort(&c), &options).unwrap();
    assert!(matches!(r.verdict, AuditVerdict::GapRisk { .. }), "{r:?}");

    let mut cfg = SimulationConfig::setting(3).unwrap();
    cfg.phi = 120.0;
    cfg.d_rot = 4;
    let c = generate_cohort(&cfg, 4000, &mut SimRng::new(1)).unwrap();
    let options = AuditOptions { truth: Some(simulation_truth(&cfg)), ..AuditOptions::default() };
    let r = audit(&AuditData::from_cohort(&c), &options).unwrap();
    assert!(matches!(r.verdict, AuditVerdict::GapRisk { .. }), "{r:?}");
}

#[test]
fn audit_without_truth_on_identical_groups_is_not_a_gap_risk() {
    let cfg = SimulationConfig::setting(1).unwrap();
    let c = generate_cohort(&cfg, 4000, &mut SimRng::new(2)).unwrap();
    let r = audit(&AuditData::from_cohort(&c), &AuditOptions::default()).unwrap();
    assert!(!matches!(r.verdict, AuditVerdict::GapRisk { .. }), "{r:?}");
}
