//! Drift monitoring against a standing threshold. A live window whose labeled
//! outliers break the selection constraints asks for a higher threshold; a
//! residual operating range that has shrunk asks for a refit and a lower one.

use serde::{Deserialize, Serialize};

use crate::ath::{check_constraints, ConstraintStatus, ThresholdDecision};
use crate::series::{AthConfig, ScoreSeries, Tail, TimeSeries};
use crate::stats::iqr;

pub const DEFAULT_SHRINK_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBaseline {
    pub iqr_at_fit: f64,
    pub shrink_factor: f64,
}

impl RangeBaseline {
    pub fn from_residuals(residuals: &[f64], shrink_factor: f64) -> Self {
        RangeBaseline {
            iqr_at_fit: iqr(residuals).unwrap_or(0.0).max(0.0),
            shrink_factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailViolation {
    pub tail: Tail,
    pub status: ConstraintStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftKind {
    None,
    ConstraintViolation(Vec<TailViolation>),
    RangeShrink { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftStatus {
    pub kind: DriftKind,
    pub at: i64,
}

impl DriftStatus {
    pub fn is_trigger(&self) -> bool {
        self.kind != DriftKind::None
    }

    pub fn short_name(&self) -> &'static str {
        match self.kind {
            DriftKind::None => "none",
            DriftKind::ConstraintViolation(_) => "constraint_violation",
            DriftKind::RangeShrink { .. } => "range_shrink",
        }
    }
}

fn tail_violation(live_scores: &ScoreSeries, decision: &ThresholdDecision, cfg: &AthConfig) -> Option<TailViolation> {
    let outliers: Vec<usize> = live_scores
        .scores()
        .iter()
        .enumerate()
        .filter(|(_, &s)| decision.tail.beyond(s, decision.threshold))
        .map(|(i, _)| i)
        .collect();
    let status = check_constraints(&outliers, live_scores.len(), live_scores.axis(), cfg);
    (!status.ok()).then_some(TailViolation {
        tail: decision.tail,
        status,
    })
}

fn range_ratio(live_residuals: &TimeSeries, baseline: &RangeBaseline) -> Option<f64> {
    if baseline.iqr_at_fit <= 0.0 {
        return None;
    }
    let ratio = iqr(live_residuals.values())? / baseline.iqr_at_fit;
    (ratio < baseline.shrink_factor).then_some(ratio)
}

fn last_timestamp(scores: &ScoreSeries) -> i64 {
    scores.axis().timestamp_of(scores.len().saturating_sub(1))
}

/// Single-tail check: constraint violation first, then range shrinkage.
pub fn observe_window(
    live_scores: &ScoreSeries,
    live_residuals: &TimeSeries,
    decision: &ThresholdDecision,
    cfg: &AthConfig,
    baseline: &RangeBaseline,
) -> DriftStatus {
    let at = last_timestamp(live_scores);
    if let Some(v) = tail_violation(live_scores, decision, cfg) {
        return DriftStatus {
            kind: DriftKind::ConstraintViolation(vec![v]),
            at,
        };
    }
    let kind = match range_ratio(live_residuals, baseline) {
        Some(ratio) => DriftKind::RangeShrink { ratio },
        None => DriftKind::None,
    };
    DriftStatus { kind, at }
}

/// Both tails against their own decisions; all violating tails are reported.
pub fn observe_two_tailed(
    live_scores: &ScoreSeries,
    live_residuals: &TimeSeries,
    decisions: (&ThresholdDecision, &ThresholdDecision),
    cfgs: (&AthConfig, &AthConfig),
    baseline: &RangeBaseline,
) -> DriftStatus {
    let at = last_timestamp(live_scores);
    let violations: Vec<TailViolation> = [
        tail_violation(live_scores, decisions.0, cfgs.0),
        tail_violation(live_scores, decisions.1, cfgs.1),
    ]
    .into_iter()
    .flatten()
    .collect();
    if !violations.is_empty() {
        return DriftStatus {
            kind: DriftKind::ConstraintViolation(violations),
            at,
        };
    }
    let kind = match range_ratio(live_residuals, baseline) {
        Some(ratio) => DriftKind::RangeShrink { ratio },
        None => DriftKind::None,
    };
    DriftStatus { kind, at }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ath::apply_ath;
    use crate::series::Axis;

    fn axis() -> Axis {
        Axis::new(0, 3600).unwrap()
    }

    fn wave(n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|i| amp * (((i * 37) % 101) as f64 / 50.0 - 1.0)).collect()
    }

    fn decision(threshold: f64) -> ThresholdDecision {
        ThresholdDecision {
            threshold,
            tail: Tail::Right,
            outlier_count: 0,
            outlier_fraction: 0.0,
            max_diff_frequency: 0,
            candidates_examined: 1,
            constraints_met: true,
        }
    }

    #[test]
    fn in_distribution_window_is_quiet() {
        let v = wave(168, 1.0);
        let scores = ScoreSeries::new(axis(), v.clone()).unwrap();
        let cfg = AthConfig::right().with_limits(3, 0.05);
        let d = apply_ath(&scores, &cfg).unwrap();
        let resid = TimeSeries::new(0, 3600, v.clone()).unwrap();
        let base = RangeBaseline::from_residuals(&v, DEFAULT_SHRINK_FACTOR);
        let st = observe_window(&scores, &resid, &d, &cfg, &base);
        assert_eq!(st.kind, DriftKind::None);
        assert!(!st.is_trigger());
    }

    #[test]
    fn periodic_spikes_violate() {
        let mut v = vec![1.0; 168];
        for d in 0..7 {
            v[d * 24 + 12] = 5.0;
        }
        let scores = ScoreSeries::new(axis(), v.clone()).unwrap();
        let resid = TimeSeries::new(0, 3600, v.clone()).unwrap();
        let cfg = AthConfig::right().with_limits(3, 0.1);
        let base = RangeBaseline { iqr_at_fit: 0.0, shrink_factor: 0.5 };
        let st = observe_window(&scores, &resid, &decision(1.0), &cfg, &base);
        match st.kind {
            DriftKind::ConstraintViolation(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].status.violating_diff, Some((1, 6)));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.at, 167 * 3600);
    }

    #[test]
    fn shrunken_range() {
        let fit = wave(400, 1.0);
        let base = RangeBaseline::from_residuals(&fit, DEFAULT_SHRINK_FACTOR);
        let live: Vec<f64> = fit.iter().map(|x| 0.3 * x).collect();
        let scores = ScoreSeries::new(axis(), live.clone()).unwrap();
        let resid = TimeSeries::new(0, 3600, live).unwrap();
        let st = observe_window(&scores, &resid, &decision(10.0), &AthConfig::right(), &base);
        match st.kind {
            DriftKind::RangeShrink { ratio } => assert!((ratio - 0.3).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn violation_takes_priority_over_shrink() {
        let fit = wave(168, 10.0);
        let base = RangeBaseline::from_residuals(&fit, DEFAULT_SHRINK_FACTOR);
        let mut live = vec![0.0; 168];
        for d in 0..7 {
            live[d * 24 + 3] = 1.0;
        }
        let scores = ScoreSeries::new(axis(), live.clone()).unwrap();
        let resid = TimeSeries::new(0, 3600, live).unwrap();
        let st = observe_window(&scores, &resid, &decision(0.5), &AthConfig::right(), &base);
        assert!(matches!(st.kind, DriftKind::ConstraintViolation(_)));
    }
}
