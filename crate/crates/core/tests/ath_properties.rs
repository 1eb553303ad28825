mod common;

use ath_core::{
    apply_ath, apply_ath_traced, apply_ath_with_candidates, check_constraints, label_anomalies, AthConfig, Axis,
    BucketGranularity, ScoreSeries, Tail,
};
use common::{oracle_walk, tail_sorted_unique, violates};
use proptest::prelude::*;

fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec((0i32..6).prop_map(f64::from), 1..200),
        prop::collection::vec(-5.0f64..5.0, 1..200),
        // Periodic bursts over a flat baseline.
        (1usize..200, 1usize..30, 0usize..30, 2.0f64..9.0).prop_map(|(n, period, phase, level)| {
            (0..n)
                .map(|i| if i % period == phase % period { level } else { 1.0 })
                .collect()
        }),
    ]
}

fn config_strategy() -> impl Strategy<Value = AthConfig> {
    (
        any::<bool>(),
        1u32..5,
        0.001f64..0.5,
        prop_oneof![Just(BucketGranularity::Day), (1u32..13).prop_map(BucketGranularity::MultiHour)],
    )
        .prop_map(|(right, p, q, g)| {
            AthConfig::new(if right { Tail::Right } else { Tail::Left })
                .with_limits(p, q)
                .with_granularity(g)
        })
        .prop_filter("valid", |c| c.validate().is_ok())
}

fn axis_strategy() -> impl Strategy<Value = Axis> {
    (-1_000_000i64..1_000_000, prop::sample::select(vec![60i64, 300, 900, 3600, 7200, 86_400]))
        .prop_map(|(s, i)| Axis::new(s, i).unwrap())
}

fn outliers(s: &ScoreSeries, threshold: f64, tail: Tail) -> Vec<usize> {
    label_anomalies(s, threshold, tail)
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_anomaly())
        .map(|(i, _)| i)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_brute_force(v in scores_strategy(), cfg in config_strategy(), axis in axis_strategy()) {
        let s = ScoreSeries::new(axis, v.clone()).unwrap();
        let want = oracle_walk(&v, axis, &tail_sorted_unique(&v, cfg.tail), &cfg);
        prop_assert_eq!(apply_ath(&s, &cfg).unwrap().threshold.to_bits(), want.to_bits());
    }

    #[test]
    fn returned_threshold_is_safe(v in scores_strategy(), cfg in config_strategy(), axis in axis_strategy()) {
        let s = ScoreSeries::new(axis, v.clone()).unwrap();
        let d = apply_ath(&s, &cfg).unwrap();
        let idx = outliers(&s, d.threshold, cfg.tail);
        prop_assert!(idx.len() as f64 / v.len() as f64 <= cfg.proportion_limit);
        let status = check_constraints(&idx, v.len(), axis, &cfg);
        prop_assert!(status.periodicity_ok && status.proportion_ok);
        prop_assert!(!violates(&v, axis, d.threshold, &cfg));
        prop_assert!(d.constraints_met);
        prop_assert_eq!(d.outlier_count, idx.len());
    }

    #[test]
    fn walk_grows_outlier_set(v in scores_strategy(), cfg in config_strategy(), axis in axis_strategy()) {
        let s = ScoreSeries::new(axis, v).unwrap();
        let (d, steps) = apply_ath_traced(&s, &cfg).unwrap();
        prop_assert!(!steps.is_empty());
        for w in steps.windows(2) {
            prop_assert_eq!(cfg.tail.extreme_first(w[0].threshold, w[1].threshold), std::cmp::Ordering::Less);
            prop_assert!(w[0].outlier_count <= w[1].outlier_count);
            prop_assert!(!w[0].violated);
            let earlier = outliers(&s, w[0].threshold, cfg.tail);
            let later = outliers(&s, w[1].threshold, cfg.tail);
            prop_assert!(earlier.iter().all(|i| later.binary_search(i).is_ok()));
        }
        prop_assert_eq!(d, apply_ath(&s, &cfg).unwrap());
    }

    #[test]
    fn deterministic(v in scores_strategy(), cfg in config_strategy(), axis in axis_strategy()) {
        let s = ScoreSeries::new(axis, v).unwrap();
        let a = apply_ath(&s, &cfg).unwrap();
        let b = apply_ath(&s.clone(), &cfg).unwrap();
        prop_assert_eq!(a.threshold.to_bits(), b.threshold.to_bits());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn unique_scores_as_candidates(v in scores_strategy(), cfg in config_strategy(), axis in axis_strategy()) {
        let s = ScoreSeries::new(axis, v.clone()).unwrap();
        let mut shuffled = v.clone();
        shuffled.reverse();
        prop_assert_eq!(
            apply_ath_with_candidates(&s, &shuffled, &cfg).unwrap(),
            apply_ath(&s, &cfg).unwrap()
        );
    }

    #[test]
    fn candidate_subset_matches_brute_force(
        v in scores_strategy(),
        cfg in config_strategy(),
        axis in axis_strategy(),
        cands in prop::collection::vec(-6.0f64..10.0, 1..12),
    ) {
        let s = ScoreSeries::new(axis, v.clone()).unwrap();
        let want = oracle_walk(&v, axis, &tail_sorted_unique(&cands, cfg.tail), &cfg);
        prop_assert_eq!(apply_ath_with_candidates(&s, &cands, &cfg).unwrap().threshold.to_bits(), want.to_bits());
    }
}

#[test]
fn worked_examples() {
    let hourly = |v: Vec<f64>| ScoreSeries::new(Axis::new(0, 3600).unwrap(), v).unwrap();
    let s = hourly(vec![1., 1., 1., 1., 9., 1., 1., 1., 1., 1.]);
    let cfg = AthConfig::right().with_limits(2, 0.2);
    assert_eq!(apply_ath(&s, &cfg).unwrap().threshold, 1.0);
    assert_eq!(apply_ath_with_candidates(&s, &[9.0, 1.0], &cfg).unwrap().threshold, 1.0);
    let top = apply_ath_with_candidates(&s, &[9.0], &cfg).unwrap();
    assert_eq!((top.threshold, top.outlier_count), (9.0, 0));

    let spikes = common::noon_spikes(&[0, 1, 2, 3, 4, 5, 6], 7, 5.0);
    let d = apply_ath(&spikes, &AthConfig::right().with_limits(3, 0.1)).unwrap();
    assert_eq!((d.threshold, d.outlier_count), (5.0, 0));

    let constant = hourly(vec![7.0; 13]);
    let d = apply_ath(&constant, &AthConfig::right()).unwrap();
    assert_eq!((d.threshold, d.outlier_count), (7.0, 0));
}
