//! Ranking metrics and their group gaps.
//!
//! Every pairwise comparison gives half credit to score ties, so AUC, xAUC
//! and the overall-AUC decomposition are mutually consistent.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;
use crate::synthgen::{censorship_rate, missed_positive_rate};
use crate::types::{Cohort, GroupId};

/// Twice the Mann-Whitney U count of `pos > neg` pairs (ties count 1), which is
/// an exact integer as long as there are fewer than 2^53 pairs.
fn doubled_pair_wins(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // doubled average rank of a tie block spanning 1-based ranks i+1..=j is i + j + 1
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let n_pos = all[i..j].iter().filter(|e| e.1).count() as u128;
        doubled_rank_sum += n_pos * (i + j + 1) as u128;
        i = j;
    }
    let p = pos.len() as u128;
    (doubled_rank_sum - p * (p + 1)) as f64
}

/// Area under the ROC curve: the probability that a random positive outscores
/// a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), actual: labels.len() });
    }
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass("auc"));
    }
    Ok(doubled_pair_wins(&pos, &neg) / (2.0 * pos.len() as f64 * neg.len() as f64))
}

/// Cross-group AUC: the probability that a positive drawn from `pos` outscores
/// a negative drawn from `neg`.
pub fn xauc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() {
        return Err(Error::EmptyInput("xauc positives"));
    }
    if neg.is_empty() {
        return Err(Error::EmptyInput("xauc negatives"));
    }
    Ok(doubled_pair_wins(pos, neg) / (2.0 * pos.len() as f64 * neg.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub auc_overall: f64,
    pub auc_0: f64,
    pub auc_1: f64,
    /// Positives from group 0 against negatives from group 1.
    pub xauc_01: f64,
    pub xauc_10: f64,
    pub delta_auc: f64,
    pub delta_xauc: f64,
    pub missed_positive_0: f64,
    pub missed_positive_1: f64,
    pub missed_positive_overall: f64,
    pub censorship_rate_0: f64,
    pub censorship_rate_1: f64,
}

impl GapReport {
    /// `(name, value)` for the seven ranking metrics.
    pub fn ranking_metrics(&self) -> [(&'static str, f64); 7] {
        [
            ("auc_overall", self.auc_overall),
            ("auc_0", self.auc_0),
            ("auc_1", self.auc_1),
            ("xauc_01", self.xauc_01),
            ("xauc_10", self.xauc_10),
            ("delta_auc", self.delta_auc),
            ("delta_xauc", self.delta_xauc),
        ]
    }
}

struct GroupScores {
    pos: [Vec<f64>; 2],
    neg: [Vec<f64>; 2],
}

fn split_by_group(cohort: &Cohort) -> GroupScores {
    let mut gs = GroupScores { pos: [Vec::new(), Vec::new()], neg: [Vec::new(), Vec::new()] };
    for p in cohort.patients() {
        let bucket = if p.y { &mut gs.pos } else { &mut gs.neg };
        bucket[p.group.index()].push(p.score);
    }
    gs
}

/// Ranking metrics of the cohort's scores against the true labels `y`, plus
/// the cohort's missed-positive and censorship rates.
pub fn gap_report(cohort: &Cohort) -> Result<GapReport> {
    let gs = split_by_group(cohort);
    for g in GroupId::BOTH {
        if gs.pos[g.index()].is_empty() {
            return Err(Error::MissingGroupClass { group: g, class: "positive" });
        }
        if gs.neg[g.index()].is_empty() {
            return Err(Error::MissingGroupClass { group: g, class: "negative" });
        }
    }
    let auc_a = |a: usize| xauc(&gs.pos[a], &gs.neg[a]);
    let scores = cohort.scores();
    let labels: Vec<bool> = cohort.patients().iter().map(|p| p.y).collect();
    let (auc_0, auc_1) = (auc_a(0)?, auc_a(1)?);
    let xauc_01 = xauc(&gs.pos[0], &gs.neg[1])?;
    let xauc_10 = xauc(&gs.pos[1], &gs.neg[0])?;
    let rate = |g: Option<GroupId>| missed_positive_rate(cohort, g);
    Ok(GapReport {
        auc_overall: auc(&scores, &labels)?,
        auc_0,
        auc_1,
        xauc_01,
        xauc_10,
        delta_auc: (auc_1 - auc_0).abs(),
        delta_xauc: (xauc_01 - xauc_10).abs(),
        missed_positive_0: rate(Some(GroupId::Zero))?,
        missed_positive_1: rate(Some(GroupId::One))?,
        missed_positive_overall: rate(None)?,
        censorship_rate_0: censorship_rate(cohort, GroupId::Zero)?,
        censorship_rate_1: censorship_rate(cohort, GroupId::One)?,
    })
}

/// `p_y(a) = P(A = a | Y = y)`, indexed `[y][a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassGroupWeights(pub [[f64; 2]; 2]);

impl ClassGroupWeights {
    pub fn from_cohort(cohort: &Cohort) -> Result<Self> {
        let mut counts = [[0usize; 2]; 2];
        for p in cohort.patients() {
            counts[p.y as usize][p.group.index()] += 1;
        }
        let mut w = [[0.0; 2]; 2];
        for y in 0..2 {
            let total = counts[y][0] + counts[y][1];
            if total == 0 {
                return Err(Error::SingleClass("class-group weights"));
            }
            for a in 0..2 {
                w[y][a] = counts[y][a] as f64 / total as f64;
            }
        }
        Ok(Self(w))
    }
}

/// `|AUC - sum_{a, a'} p_1(a) p_0(a') xAUC_{a, a'}|`, with `xAUC_{a,a} = AUC_a`.
///
/// Terms with zero weight are skipped, so a group that lacks a class (and
/// therefore has undefined metrics) does not poison the identity.
pub fn decomposition_residual(report: &GapReport, weights: &ClassGroupWeights) -> Result<f64> {
    let w = weights.0;
    for (y, row) in w.iter().enumerate() {
        let sum = row[0] + row[1];
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::WeightsNotNormalized { class: y as u8, sum });
        }
    }
    // pairs (positive group, negative group)
    let terms = [
        (w[1][0] * w[0][0], report.auc_0),
        (w[1][1] * w[0][1], report.auc_1),
        (w[1][0] * w[0][1], report.xauc_01),
        (w[1][1] * w[0][0], report.xauc_10),
    ];
    let combined: f64 = terms.iter().filter(|(wt, _)| *wt > 0.0).map(|(wt, m)| wt * m).sum();
    Ok((report.auc_overall - combined).abs())
}

/// Median and 95% empirical interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CiSummary {
    pub fn scaled(&self, k: f64) -> Self {
        Self { median: self.median * k, lower: self.lower * k, upper: self.upper * k }
    }
}

/// Median and 2.5 / 97.5 percentiles, interpolating linearly between order
/// statistics.
pub fn empirical_ci(values: &[f64]) -> Result<CiSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("empirical_ci"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(CiSummary {
        median: quantile_sorted(&v, 0.5),
        lower: quantile_sorted(&v, 0.025),
        upper: quantile_sorted(&v, 0.975),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Patient;
    use alloc::vec;
    use proptest::prelude::*;

    fn brute_xauc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for &p in pos {
            for &n in neg {
                s += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    fn cohort(rows: &[(u8, bool, f64)]) -> Cohort {
        let ps = rows
            .iter()
            .map(|&(g, y, s)| Patient::new(GroupId::try_from(g).unwrap(), vec![0.0], y, true, s))
            .collect();
        Cohort::new(ps, 1).unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.3, 0.4], &[true, true]), Err(Error::SingleClass("auc")));
    }

    #[test]
    fn xauc_examples() {
        assert_eq!(xauc(&[5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        let pos = [0.2, 0.7, 0.5];
        let neg = [0.5, 0.1, 0.9];
        assert_eq!(xauc(&pos, &neg).unwrap(), brute_xauc(&pos, &neg));
        assert!(xauc(&[], &[1.0]).is_err());
        assert!(xauc(&[1.0], &[]).is_err());
    }

    #[test]
    fn hand_built_gap_report() {
        // group 0: pos {0.8, 0.4}, neg {0.5, 0.1}; group 1: pos {0.9, 0.5}, neg {0.6, 0.3}
        let c = cohort(&[
            (0, true, 0.8),
            (0, true, 0.4),
            (0, false, 0.5),
            (0, false, 0.1),
            (1, true, 0.9),
            (1, true, 0.5),
            (1, false, 0.6),
            (1, false, 0.3),
        ]);
        let r = gap_report(&c).unwrap();
        // AUC_0: 0.8 beats both, 0.4 beats 0.1 -> 3/4
        assert_eq!(r.auc_0, 0.75);
        // AUC_1: 0.9 beats both, 0.5 beats 0.3 -> 3/4
        assert_eq!(r.auc_1, 0.75);
        // xAUC_01: 0.8 beats 0.6,0.3; 0.4 beats 0.3 -> 3/4
        assert_eq!(r.xauc_01, 0.75);
        // xAUC_10: 0.9 beats both; 0.5 ties 0.5, beats 0.1 -> 3.5/4
        assert_eq!(r.xauc_10, 0.875);
        assert_eq!(r.delta_auc, 0.0);
        assert_eq!(r.delta_xauc, 0.125);
        // overall: 4 positives x 4 negatives
        let all_pos = [0.8, 0.4, 0.9, 0.5];
        let all_neg = [0.5, 0.1, 0.6, 0.3];
        assert_eq!(r.auc_overall, brute_xauc(&all_pos, &all_neg));
        let w = ClassGroupWeights::from_cohort(&c).unwrap();
        assert!(decomposition_residual(&r, &w).unwrap() <= 1e-10);
    }

    #[test]
    fn perfect_separation_has_no_gap() {
        let c = cohort(&[(0, true, 3.0), (0, false, 1.0), (1, true, 4.0), (1, false, 0.0), (1, true, 5.0)]);
        let r = gap_report(&c).unwrap();
        for v in [r.auc_overall, r.auc_0, r.auc_1, r.xauc_01, r.xauc_10] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(r.delta_auc, 0.0);
        assert_eq!(r.delta_xauc, 0.0);
    }

    #[test]
    fn mirrored_groups_have_no_auc_gap() {
        let c = cohort(&[
            (0, true, 0.7),
            (0, false, 0.4),
            (0, false, 0.8),
            (1, true, 0.7),
            (1, false, 0.4),
            (1, false, 0.8),
        ]);
        assert_eq!(gap_report(&c).unwrap().delta_auc, 0.0);
    }

    #[test]
    fn missing_group_class_is_named() {
        let c = cohort(&[(0, true, 0.7), (0, false, 0.4), (1, true, 0.7)]);
        assert_eq!(gap_report(&c), Err(Error::MissingGroupClass { group: GroupId::One, class: "negative" }));
    }

    #[test]
    fn single_group_decomposition() {
        let c = cohort(&[(0, true, 0.7), (0, false, 0.4), (0, false, 0.9), (0, true, 0.2)]);
        let w = ClassGroupWeights::from_cohort(&c).unwrap();
        let overall = auc(&c.scores(), &[true, false, false, true]).unwrap();
        let r = GapReport {
            auc_overall: overall,
            auc_0: overall,
            auc_1: f64::NAN,
            xauc_01: f64::NAN,
            xauc_10: f64::NAN,
            delta_auc: f64::NAN,
            delta_xauc: f64::NAN,
            missed_positive_0: 0.0,
            missed_positive_1: f64::NAN,
            missed_positive_overall: 0.0,
            censorship_rate_0: 0.0,
            censorship_rate_1: f64::NAN,
        };
        assert_eq!(decomposition_residual(&r, &w).unwrap(), 0.0);
        let bad = ClassGroupWeights([[0.5, 0.6], [1.0, 0.0]]);
        assert!(matches!(decomposition_residual(&r, &bad), Err(Error::WeightsNotNormalized { class: 0, .. })));
    }

    #[test]
    fn empirical_ci_examples() {
        let c = empirical_ci(&[2.0; 7]).unwrap();
        assert_eq!((c.median, c.lower, c.upper), (2.0, 2.0, 2.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let c = empirical_ci(&v).unwrap();
        assert_eq!(c.median, 50.5);
        assert!((c.lower - 3.475).abs() < 1e-12);
        assert!((c.upper - 97.525).abs() < 1e-12);
        let mut rev = v.clone();
        rev.reverse();
        assert_eq!(empirical_ci(&rev).unwrap(), c);
        assert!(empirical_ci(&[]).is_err());
    }

    fn arb_cohort() -> impl Strategy<Value = Vec<(u8, bool, f64)>> {
        // coarse scores force ties
        proptest::collection::vec((0u8..2, any::<bool>(), (0i32..12).prop_map(|k| k as f64 / 4.0)), 4..60)
            .prop_map(|mut rows| {
                rows.extend([(0, true, 1.0), (0, false, 0.5), (1, true, 1.5), (1, false, 0.0)]);
                rows
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn decomposition_holds(rows in arb_cohort()) {
            let c = cohort(&rows);
            let r = gap_report(&c).unwrap();
            let w = ClassGroupWeights::from_cohort(&c).unwrap();
            prop_assert!(decomposition_residual(&r, &w).unwrap() <= 1e-10);
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(pos in proptest::collection::vec(-3i32..3, 1..20), neg in proptest::collection::vec(-3i32..3, 1..20)) {
            let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
            let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
            prop_assert_eq!(xauc(&pos, &neg).unwrap(), brute_xauc(&pos, &neg));
        }

        #[test]
        fn negated_scores_complement(scores in proptest::collection::vec(-1e3f64..1e3, 2..40), seed in any::<u64>()) {
            let labels: Vec<bool> = (0..scores.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let total = auc(&scores, &labels).unwrap() + auc(&neg, &labels).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_transform_invariance(rows in arb_cohort()) {
            let c = cohort(&rows);
            let r = gap_report(&c).unwrap();
            let t: Vec<f64> = c.scores().iter().map(|s| libm::exp(3.0 * s) - 7.0).collect();
            let r2 = gap_report(&c.clone().with_scores(&t).unwrap()).unwrap();
            prop_assert_eq!(r, r2);
        }

        #[test]
        fn xauc_subsampling_consistency(
            pos in proptest::collection::vec(0i32..10, 1..10),
            n1 in proptest::collection::vec(0i32..10, 1..10),
            n2 in proptest::collection::vec(0i32..10, 1..10),
        ) {
            let f = |v: &Vec<i32>| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
            let (pos, n1, n2) = (f(&pos), f(&n1), f(&n2));
            let joined: Vec<f64> = n1.iter().chain(&n2).copied().collect();
            let whole = xauc(&pos, &joined).unwrap();
            let mean = (xauc(&pos, &n1).unwrap() * n1.len() as f64 + xauc(&pos, &n2).unwrap() * n2.len() as f64)
                / joined.len() as f64;
            prop_assert!((whole - mean).abs() < 1e-12);
        }
    }
}
