//! Adaptive thresholding: walk candidate thresholds from the most extreme
//! towards the bulk of the scores and keep the loosest one whose outlier set
//! is neither periodic nor too frequent.
//!
//! The walk is incremental. Loosening the threshold only ever adds outliers,
//! so run representatives and the pairwise bucket-difference histogram are
//! maintained under insertion instead of being rebuilt per candidate. For
//! [`apply_ath`] only the most extreme `floor(proportion_limit * n) + 1`
//! scores are ever needed before the proportion constraint must break, so
//! those are selected in linear time and only they are sorted.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{bucket_index, AnomalyLabel, AthConfig, Axis, BucketGranularity, ScoreSeries, Tail};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub threshold: f64,
    pub tail: Tail,
    pub outlier_count: usize,
    pub outlier_fraction: f64,
    pub max_diff_frequency: u64,
    pub candidates_examined: usize,
    /// False only when the very first candidate already violated the
    /// constraints; the walk then returns that candidate regardless.
    pub constraints_met: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintStatus {
    pub proportion_ok: bool,
    pub periodicity_ok: bool,
    /// `(diff, frequency)` of the most frequent offending difference.
    pub violating_diff: Option<(i64, u64)>,
}

impl ConstraintStatus {
    pub fn ok(&self) -> bool {
        self.proportion_ok && self.periodicity_ok
    }
}

/// One candidate visited by the walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AthStep {
    pub threshold: f64,
    pub outlier_count: usize,
    pub violated: bool,
}

/// First index of every maximal run of consecutive integers.
pub fn collapse_consecutive_runs(indices: &[usize]) -> Vec<usize> {
    let mut reps = Vec::new();
    let mut prev: Option<usize> = None;
    for &i in indices {
        if prev.is_none_or(|p| p + 1 != i) {
            reps.push(i);
        }
        prev = Some(i);
    }
    reps
}

/// Frequencies of all positive pairwise bucket differences among `representatives`.
pub fn temporal_diff_histogram(
    representatives: &[usize],
    axis: Axis,
    g: BucketGranularity,
) -> BTreeMap<i64, u64> {
    // (bucket, multiplicity); buckets are nondecreasing since indices are.
    let mut groups: Vec<(i64, u64)> = Vec::new();
    for &i in representatives {
        let b = bucket_index(axis.timestamp_of(i), g);
        match groups.last_mut() {
            Some((last, c)) if *last == b => *c += 1,
            _ => groups.push((b, 1)),
        }
    }
    let mut hist = BTreeMap::new();
    for (k, &(bi, ci)) in groups.iter().enumerate() {
        for &(bj, cj) in &groups[k + 1..] {
            let d = (bj - bi).abs();
            if d != 0 {
                *hist.entry(d).or_insert(0) += ci * cj;
            }
        }
    }
    hist
}

/// Checks one outlier set (sorted indices into a window of length `n`).
pub fn check_constraints(
    outlier_indices: &[usize],
    n: usize,
    axis: Axis,
    config: &AthConfig,
) -> ConstraintStatus {
    let proportion_ok = !exceeds_proportion(outlier_indices.len(), n, config.proportion_limit);
    let reps = collapse_consecutive_runs(outlier_indices);
    let hist = temporal_diff_histogram(&reps, axis, config.granularity);
    let limit = config.periodicity_limit as u64;
    let violating_diff = hist
        .iter()
        .filter(|(_, &f)| f > limit)
        .fold(None, |best: Option<(i64, u64)>, (&d, &f)| match best {
            Some((_, bf)) if bf >= f => best,
            _ => Some((d, f)),
        });
    ConstraintStatus {
        proportion_ok,
        periodicity_ok: violating_diff.is_none(),
        violating_diff,
    }
}

#[inline]
fn exceeds_proportion(count: usize, n: usize, limit: f64) -> bool {
    count as f64 / n as f64 > limit
}

/// Applies a threshold with the same strict inequality used during selection.
pub fn label_anomalies(scores: &ScoreSeries, threshold: f64, tail: Tail) -> Vec<AnomalyLabel> {
    scores
        .scores()
        .iter()
        .map(|&s| {
            if tail.beyond(s, threshold) {
                tail.label()
            } else {
                AnomalyLabel::Normal
            }
        })
        .collect()
}

/// Label for one score under a pair of thresholds. When both tails fire the
/// larger distance to its threshold wins (ties go right).
#[inline]
pub fn merge_label(score: f64, left_threshold: f64, right_threshold: f64) -> AnomalyLabel {
    let left = score < left_threshold;
    let right = score > right_threshold;
    match (left, right) {
        (false, false) => AnomalyLabel::Normal,
        (true, false) => AnomalyLabel::Left,
        (false, true) => AnomalyLabel::Right,
        (true, true) => {
            if left_threshold - score > score - right_threshold {
                AnomalyLabel::Left
            } else {
                AnomalyLabel::Right
            }
        }
    }
}

pub fn merge_labels(scores: &[f64], left_threshold: f64, right_threshold: f64) -> Vec<AnomalyLabel> {
    scores
        .iter()
        .map(|&s| merge_label(s, left_threshold, right_threshold))
        .collect()
}

/// Selects a threshold from all unique score values.
pub fn apply_ath(scores: &ScoreSeries, config: &AthConfig) -> Result<ThresholdDecision> {
    validate_inputs(scores, config)?;
    let n = scores.len();
    let s = scores.scores();
    let tail = config.tail;

    let must_break = min_violating_count(n, config.proportion_limit);
    if must_break + 1 < n {
        // Select on contiguous values, then gather every point at least as
        // extreme as the pivot (whole tie groups) in one scan.
        let mut values = s.to_vec();
        let (_, &mut pivot, _) = values.select_nth_unstable_by(must_break, |a, b| tail.extreme_first(*a, *b));
        let mut order: Vec<usize> = (0..n)
            .filter(|&i| tail.extreme_first(s[i], pivot) != std::cmp::Ordering::Greater)
            .collect();
        order.sort_unstable_by(|&a, &b| tail.extreme_first(s[a], s[b]));
        let candidates = unique_in_order(order.iter().map(|&i| s[i]));
        let outcome = walk(scores, &order, &candidates, config, None);
        if outcome.broke {
            return Ok(finish(scores, config, outcome));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| tail.extreme_first(s[a], s[b]));
    let candidates = unique_in_order(order.iter().map(|&i| s[i]));
    let outcome = walk(scores, &order, &candidates, config, None);
    Ok(finish(scores, config, outcome))
}

/// Like [`apply_ath`] but also returns every visited step.
pub fn apply_ath_traced(
    scores: &ScoreSeries,
    config: &AthConfig,
) -> Result<(ThresholdDecision, Vec<AthStep>)> {
    validate_inputs(scores, config)?;
    let s = scores.scores();
    let tail = config.tail;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_unstable_by(|&a, &b| tail.extreme_first(s[a], s[b]));
    let candidates = unique_in_order(order.iter().map(|&i| s[i]));
    let mut steps = Vec::new();
    let outcome = walk(scores, &order, &candidates, config, Some(&mut steps));
    Ok((finish(scores, config, outcome), steps))
}

/// Selects a threshold from an explicit candidate list (e.g. POT peaks).
pub fn apply_ath_with_candidates(
    scores: &ScoreSeries,
    candidates: &[f64],
    config: &AthConfig,
) -> Result<ThresholdDecision> {
    validate_inputs(scores, config)?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if let Some(index) = candidates.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let s = scores.scores();
    let tail = config.tail;
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable_by(|a, b| tail.extreme_first(*a, *b));
    let sorted = unique_in_order(sorted.into_iter());
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_unstable_by(|&a, &b| tail.extreme_first(s[a], s[b]));
    let outcome = walk(scores, &order, &sorted, config, None);
    Ok(finish(scores, config, outcome))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoTailedDecision {
    pub left: ThresholdDecision,
    pub right: ThresholdDecision,
    pub labels: Vec<AnomalyLabel>,
}

/// Runs the selection once per tail and merges the labels.
pub fn two_tailed_thresholds(
    scores: &ScoreSeries,
    left_cfg: &AthConfig,
    right_cfg: &AthConfig,
) -> Result<TwoTailedDecision> {
    check_tails(left_cfg, right_cfg)?;
    let left = apply_ath(scores, left_cfg)?;
    let right = apply_ath(scores, right_cfg)?;
    let labels = merge_labels(scores.scores(), left.threshold, right.threshold);
    Ok(TwoTailedDecision { left, right, labels })
}

pub(crate) fn check_tails(left_cfg: &AthConfig, right_cfg: &AthConfig) -> Result<()> {
    if left_cfg.tail != Tail::Left || right_cfg.tail != Tail::Right {
        return Err(Error::InvalidConfig(
            "two-tailed thresholding needs a left and a right config".into(),
        ));
    }
    Ok(())
}

fn validate_inputs(scores: &ScoreSeries, config: &AthConfig) -> Result<()> {
    config.validate()?;
    if scores.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(())
}

/// Smallest outlier count that breaks the proportion constraint.
fn min_violating_count(n: usize, limit: f64) -> usize {
    let mut c = (limit * n as f64).floor().max(0.0) as usize;
    while c > 0 && exceeds_proportion(c - 1, n, limit) {
        c -= 1;
    }
    while !exceeds_proportion(c, n, limit) {
        c += 1;
    }
    c
}

fn unique_in_order(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

struct WalkOutcome {
    threshold: f64,
    examined: usize,
    broke: bool,
}

fn walk(
    scores: &ScoreSeries,
    order: &[usize],
    candidates: &[f64],
    config: &AthConfig,
    mut trace: Option<&mut Vec<AthStep>>,
) -> WalkOutcome {
    let s = scores.scores();
    let n = s.len();
    let tail = config.tail;
    let mut tracker = PeriodicityTracker::new(scores.axis(), n, config);
    let mut cursor = 0;
    let mut previous = candidates[0];
    let mut examined = 0;
    for &thresh in candidates {
        examined += 1;
        while cursor < order.len() && tail.beyond(s[order[cursor]], thresh) {
            tracker.insert(order[cursor]);
            cursor += 1;
        }
        let violated = exceeds_proportion(cursor, n, config.proportion_limit) || tracker.is_periodic();
        if let Some(t) = trace.as_deref_mut() {
            t.push(AthStep {
                threshold: thresh,
                outlier_count: cursor,
                violated,
            });
        }
        if violated {
            return WalkOutcome {
                threshold: previous,
                examined,
                broke: true,
            };
        }
        previous = thresh;
    }
    WalkOutcome {
        threshold: previous,
        examined,
        broke: false,
    }
}

fn finish(scores: &ScoreSeries, config: &AthConfig, outcome: WalkOutcome) -> ThresholdDecision {
    let n = scores.len();
    let outliers: Vec<usize> = scores
        .scores()
        .iter()
        .enumerate()
        .filter(|(_, &s)| config.tail.beyond(s, outcome.threshold))
        .map(|(i, _)| i)
        .collect();
    let reps = collapse_consecutive_runs(&outliers);
    let hist = temporal_diff_histogram(&reps, scores.axis(), config.granularity);
    let max_diff_frequency = hist.values().copied().max().unwrap_or(0);
    let status = check_constraints(&outliers, n, scores.axis(), config);
    ThresholdDecision {
        threshold: outcome.threshold,
        tail: config.tail,
        outlier_count: outliers.len(),
        outlier_fraction: outliers.len() as f64 / n as f64,
        max_diff_frequency,
        candidates_examined: outcome.examined,
        constraints_met: status.ok(),
    }
}

/// Pairwise bucket-difference counts over run representatives, maintained
/// under insertion of outlier indices.
struct PeriodicityTracker {
    axis: Axis,
    granularity: BucketGranularity,
    limit: u64,
    member: Vec<bool>,
    /// Occupied buckets with their representative multiplicity.
    occupied: Vec<(i64, u64)>,
    slot: HashMap<i64, usize>,
    hist: DiffCounts,
    violations: usize,
}

enum DiffCounts {
    Dense(Vec<u64>),
    Sparse(HashMap<i64, u64>),
}

impl DiffCounts {
    #[inline]
    fn update(&mut self, d: i64, delta: i64) -> (u64, u64) {
        let cell = match self {
            DiffCounts::Dense(v) => &mut v[d as usize],
            DiffCounts::Sparse(m) => m.entry(d).or_insert(0),
        };
        let old = *cell;
        *cell = (old as i64 + delta) as u64;
        (old, *cell)
    }
}

const DENSE_SPAN_LIMIT: i64 = 1 << 24;

impl PeriodicityTracker {
    fn new(axis: Axis, n: usize, config: &AthConfig) -> Self {
        let g = config.granularity;
        let span = bucket_index(axis.timestamp_of(n.saturating_sub(1)), g)
            - bucket_index(axis.start, g)
            + 1;
        let hist = if span <= DENSE_SPAN_LIMIT {
            DiffCounts::Dense(vec![0; span as usize])
        } else {
            DiffCounts::Sparse(HashMap::new())
        };
        PeriodicityTracker {
            axis,
            granularity: g,
            limit: config.periodicity_limit as u64,
            member: vec![false; n],
            occupied: Vec::new(),
            slot: HashMap::new(),
            hist,
            violations: 0,
        }
    }

    fn is_periodic(&self) -> bool {
        self.violations > 0
    }

    fn insert(&mut self, i: usize) {
        let left = i > 0 && self.member[i - 1];
        let right = i + 1 < self.member.len() && self.member[i + 1];
        self.member[i] = true;
        match (left, right) {
            (false, false) => self.add_rep(i),
            (true, false) => {}
            (false, true) => {
                self.remove_rep(i + 1);
                self.add_rep(i);
            }
            (true, true) => self.remove_rep(i + 1),
        }
    }

    fn bucket(&self, i: usize) -> i64 {
        bucket_index(self.axis.timestamp_of(i), self.granularity)
    }

    fn shift_pairs(&mut self, b: i64, sign: i64) {
        for k in 0..self.occupied.len() {
            let (other, count) = self.occupied[k];
            if other == b {
                continue;
            }
            let (old, new) = self.hist.update((other - b).abs(), sign * count as i64);
            if old <= self.limit && new > self.limit {
                self.violations += 1;
            } else if old > self.limit && new <= self.limit {
                self.violations -= 1;
            }
        }
    }

    fn add_rep(&mut self, i: usize) {
        let b = self.bucket(i);
        self.shift_pairs(b, 1);
        match self.slot.get(&b) {
            Some(&k) => self.occupied[k].1 += 1,
            None => {
                self.slot.insert(b, self.occupied.len());
                self.occupied.push((b, 1));
            }
        }
    }

    fn remove_rep(&mut self, i: usize) {
        let b = self.bucket(i);
        let k = self.slot[&b];
        self.occupied[k].1 -= 1;
        if self.occupied[k].1 == 0 {
            self.occupied.swap_remove(k);
            self.slot.remove(&b);
            if k < self.occupied.len() {
                self.slot.insert(self.occupied[k].0, k);
            }
        }
        self.shift_pairs(b, -1);
    }
}
