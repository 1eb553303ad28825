//! Per-stream orchestration: forecaster -> residuals -> scorer -> thresholds,
//! each stage holding its own sliding window, with periodic drift checks that
//! recompute thresholds when the standing ones stop fitting the data.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ath::{
    apply_ath, apply_ath_with_candidates, check_tails, merge_label, merge_labels, ThresholdDecision,
};
use crate::detect::{fit_zscore, pot_candidates, ZScoreModel};
use crate::drift::{observe_two_tailed, DriftKind, DriftStatus, RangeBaseline, DEFAULT_SHRINK_FACTOR};
use crate::error::{Error, Result};
use crate::forecast::{default_slot_seconds, fit_seasonal_quartile, SeasonalQuartileModel, WEEK_SECONDS};
use crate::series::{AnomalyLabel, AthConfig, Axis, ScoreSeries, Tail, TimeSeries, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ForecasterKind {
    /// `slot_seconds: None` derives the slot from the series interval.
    SeasonalQuartile { slot_seconds: Option<i64> },
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScorerKind {
    ZScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CandidateSource {
    AllScores,
    PotPeaks(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Seconds of history the forecaster is fit on.
    pub forecaster_window: i64,
    /// Seconds of residuals/scores the scorer and thresholds are fit on.
    pub detector_window: i64,
    /// Points between drift checks; 0 disables them.
    pub drift_check_every: usize,
    pub forecaster: ForecasterKind,
    pub scorer: ScorerKind,
    pub candidate_source: CandidateSource,
    pub ath_left: AthConfig,
    pub ath_right: AthConfig,
    pub shrink_factor: f64,
    /// Refit the seasonal forecaster once a week of new points has arrived.
    pub weekly_refit: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            forecaster_window: 28 * SECONDS_PER_DAY,
            detector_window: 7 * SECONDS_PER_DAY,
            drift_check_every: 96,
            forecaster: ForecasterKind::SeasonalQuartile { slot_seconds: None },
            scorer: ScorerKind::ZScore,
            candidate_source: CandidateSource::AllScores,
            ath_left: AthConfig::left(),
            ath_right: AthConfig::right(),
            shrink_factor: DEFAULT_SHRINK_FACTOR,
            weekly_refit: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.detector_window <= 0 || self.forecaster_window < self.detector_window {
            return Err(Error::InvalidConfig(format!(
                "windows must satisfy forecaster_window >= detector_window > 0 (got {} and {})",
                self.forecaster_window, self.detector_window
            )));
        }
        check_tails(&self.ath_left, &self.ath_right)?;
        self.ath_left.validate()?;
        self.ath_right.validate()?;
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "shrink_factor must lie in (0, 1), got {}",
                self.shrink_factor
            )));
        }
        if let CandidateSource::PotPeaks(q) = self.candidate_source {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "POT initial quantile must lie in (0, 1), got {q}"
                )));
            }
        }
        if let ForecasterKind::SeasonalQuartile { slot_seconds: Some(s) } = self.forecaster {
            if s <= 0 || SECONDS_PER_DAY % s != 0 {
                return Err(Error::InvalidConfig(format!(
                    "slot duration {s} s must divide one day"
                )));
            }
        }
        Ok(())
    }

    fn points(&self, seconds: i64, interval: i64) -> usize {
        (seconds / interval).max(1) as usize
    }

    pub fn forecaster_points(&self, interval: i64) -> usize {
        self.points(self.forecaster_window, interval)
    }

    pub fn detector_points(&self, interval: i64) -> usize {
        self.points(self.detector_window, interval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointVerdict {
    pub timestamp: i64,
    pub value: f64,
    pub residual: f64,
    pub score: f64,
    pub label: AnomalyLabel,
    /// `(left, right)` score thresholds used for this point.
    pub thresholds: (f64, f64),
    pub drift_event: Option<DriftStatus>,
}

#[derive(Debug, Clone)]
enum Forecaster {
    Seasonal(SeasonalQuartileModel),
    Naive { last: f64 },
}

impl Forecaster {
    fn predict(&self, t: i64) -> f64 {
        match self {
            Forecaster::Seasonal(m) => m.forecast(t),
            Forecaster::Naive { last } => *last,
        }
    }
}

/// Thresholds for one score window according to the configured candidate source.
pub fn select_thresholds(
    scores: &ScoreSeries,
    cfg: &PipelineConfig,
) -> Result<(ThresholdDecision, ThresholdDecision)> {
    Ok((
        select_tail(scores, cfg, Tail::Left)?,
        select_tail(scores, cfg, Tail::Right)?,
    ))
}

fn select_tail(scores: &ScoreSeries, cfg: &PipelineConfig, tail: Tail) -> Result<ThresholdDecision> {
    let ath = match tail {
        Tail::Left => &cfg.ath_left,
        Tail::Right => &cfg.ath_right,
    };
    match cfg.candidate_source {
        CandidateSource::AllScores => apply_ath(scores, ath),
        CandidateSource::PotPeaks(q) => {
            let candidates = pot_candidates(scores, q, tail)?;
            apply_ath_with_candidates(scores, &candidates, ath)
        }
    }
}

fn push_bounded(w: &mut VecDeque<f64>, cap: usize, v: f64) {
    if w.len() == cap {
        w.pop_front();
    }
    w.push_back(v);
}

fn fit_forecaster(values: &TimeSeries, cfg: &PipelineConfig) -> Result<Forecaster> {
    match cfg.forecaster {
        ForecasterKind::SeasonalQuartile { slot_seconds } => {
            let slot = slot_seconds.unwrap_or_else(|| default_slot_seconds(values.interval()));
            Ok(Forecaster::Seasonal(fit_seasonal_quartile(values, slot)?))
        }
        ForecasterKind::Naive => Ok(Forecaster::Naive {
            last: *values.values().last().expect("non-empty"),
        }),
    }
}

/// Residuals of the trailing `count` points of `values` under `forecaster`.
/// The persistence forecaster uses each point's predecessor within `values`.
fn trailing_residuals(values: &TimeSeries, forecaster: &Forecaster, count: usize) -> Vec<f64> {
    let v = values.values();
    let lo = v.len() - count;
    (lo..v.len())
        .map(|i| match forecaster {
            Forecaster::Seasonal(m) => v[i] - m.forecast(values.timestamp_of(i)),
            Forecaster::Naive { .. } => v[i] - v[i.saturating_sub(1)],
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineState {
    id: String,
    cfg: PipelineConfig,
    interval: i64,
    next_ts: i64,
    forecaster: Forecaster,
    scorer: ZScoreModel,
    left: ThresholdDecision,
    right: ThresholdDecision,
    baseline: RangeBaseline,
    values: VecDeque<f64>,
    residuals: VecDeque<f64>,
    scores: VecDeque<f64>,
    forecaster_cap: usize,
    detector_cap: usize,
    since_check: usize,
    since_refit: usize,
}

pub fn warm_up(history: &TimeSeries, cfg: &PipelineConfig) -> Result<PipelineState> {
    warm_up_stream("stream", history, cfg)
}

/// Fits every stage on the trailing windows of `history`.
pub fn warm_up_stream(id: &str, history: &TimeSeries, cfg: &PipelineConfig) -> Result<PipelineState> {
    cfg.validate()?;
    let interval = history.interval();
    if history.span_seconds() < cfg.forecaster_window {
        return Err(Error::InsufficientHistory {
            required_s: cfg.forecaster_window,
            got_s: history.span_seconds(),
        }
        .in_stream(id));
    }
    let forecaster_cap = cfg.forecaster_points(interval);
    let detector_cap = cfg.detector_points(interval).min(forecaster_cap);
    let n = history.len();
    let window = history.slice(n - forecaster_cap, n)?;
    let forecaster = fit_forecaster(&window, cfg).map_err(|e| e.in_stream(id))?;
    let residuals = trailing_residuals(&window, &forecaster, detector_cap);
    let mut state = PipelineState {
        id: id.to_string(),
        cfg: cfg.clone(),
        interval,
        next_ts: history.end(),
        forecaster,
        scorer: ZScoreModel { mu: 0.0, sigma: 0.0 },
        left: placeholder(Tail::Left),
        right: placeholder(Tail::Right),
        baseline: RangeBaseline::from_residuals(&residuals, cfg.shrink_factor),
        values: window.values().iter().copied().collect(),
        residuals: VecDeque::new(),
        scores: VecDeque::new(),
        forecaster_cap,
        detector_cap,
        since_check: 0,
        since_refit: 0,
    };
    state.refit_detector(residuals).map_err(|e| e.in_stream(id))?;
    Ok(state)
}

fn placeholder(tail: Tail) -> ThresholdDecision {
    ThresholdDecision {
        threshold: 0.0,
        tail,
        outlier_count: 0,
        outlier_fraction: 0.0,
        max_diff_frequency: 0,
        candidates_examined: 0,
        constraints_met: true,
    }
}

impl PipelineState {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// `(left, right)` thresholds in score units.
    pub fn thresholds(&self) -> (f64, f64) {
        (self.left.threshold, self.right.threshold)
    }

    /// `(left, right)` thresholds mapped back to residual units.
    pub fn residual_thresholds(&self) -> (f64, f64) {
        (
            self.scorer.unscore(self.left.threshold),
            self.scorer.unscore(self.right.threshold),
        )
    }

    pub fn decisions(&self) -> (&ThresholdDecision, &ThresholdDecision) {
        (&self.left, &self.right)
    }

    pub fn scorer(&self) -> &ZScoreModel {
        &self.scorer
    }

    pub fn baseline(&self) -> &RangeBaseline {
        &self.baseline
    }

    pub fn next_timestamp(&self) -> i64 {
        self.next_ts
    }

    /// Current lengths of the (forecaster, residual, score) windows.
    pub fn window_lens(&self) -> (usize, usize, usize) {
        (self.values.len(), self.residuals.len(), self.scores.len())
    }

    pub fn window_caps(&self) -> (usize, usize) {
        (self.forecaster_cap, self.detector_cap)
    }

    /// Residual of `value` at `t` under the current forecaster.
    fn residual_at(&self, t: i64, value: f64) -> f64 {
        value - self.forecaster.predict(t)
    }

    /// Labels a whole span with the current models and thresholds, without
    /// advancing the state.
    pub fn label_batch(&self, span: &TimeSeries) -> Result<Vec<AnomalyLabel>> {
        if span.start() != self.next_ts || span.interval() != self.interval {
            return Err(Error::OutOfOrder {
                expected: self.next_ts,
                got: span.start(),
            });
        }
        let residuals: Vec<f64> = match &self.forecaster {
            Forecaster::Seasonal(m) => crate::forecast::residuals(span, m).into_values(),
            Forecaster::Naive { last } => {
                let v = span.values();
                (0..v.len())
                    .map(|i| v[i] - if i == 0 { *last } else { v[i - 1] })
                    .collect()
            }
        };
        let scores: Vec<f64> = residuals.iter().map(|&r| self.scorer.score(r)).collect();
        Ok(merge_labels(&scores, self.left.threshold, self.right.threshold))
    }

    /// Feeds every point of `span` through [`PipelineState::step`].
    pub fn run(&mut self, span: &TimeSeries) -> Result<Vec<PointVerdict>> {
        (0..span.len())
            .map(|i| self.step(span.timestamp_of(i), span.values()[i]))
            .collect()
    }

    pub fn step(&mut self, timestamp: i64, value: f64) -> Result<PointVerdict> {
        if timestamp != self.next_ts {
            return Err(Error::OutOfOrder {
                expected: self.next_ts,
                got: timestamp,
            });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { index: 0 });
        }
        let residual = self.residual_at(timestamp, value);
        let score = self.scorer.score(residual);
        let thresholds = self.thresholds();
        let label = merge_label(score, thresholds.0, thresholds.1);

        push_bounded(&mut self.values, self.forecaster_cap, value);
        push_bounded(&mut self.residuals, self.detector_cap, residual);
        push_bounded(&mut self.scores, self.detector_cap, score);
        if let Forecaster::Naive { last } = &mut self.forecaster {
            *last = value;
        }
        self.next_ts += self.interval;

        if self.cfg.weekly_refit {
            self.since_refit += 1;
            if self.since_refit as i64 * self.interval >= WEEK_SECONDS {
                self.since_refit = 0;
                if let Ok(f) = fit_forecaster(&self.values_series(), &self.cfg) {
                    self.forecaster = f;
                }
            }
        }

        let mut drift_event = None;
        if self.cfg.drift_check_every > 0 {
            self.since_check += 1;
            if self.since_check >= self.cfg.drift_check_every {
                self.since_check = 0;
                let status = self.check_drift();
                if status.is_trigger() {
                    self.react(&status)?;
                    drift_event = Some(status);
                }
            }
        }

        Ok(PointVerdict {
            timestamp,
            value,
            residual,
            score,
            label,
            thresholds,
            drift_event,
        })
    }

    fn series_from(&self, window: &VecDeque<f64>) -> TimeSeries {
        let start = self.next_ts - window.len() as i64 * self.interval;
        TimeSeries::new(start, self.interval, window.iter().copied().collect())
            .expect("windows are non-empty and finite")
    }

    fn values_series(&self) -> TimeSeries {
        self.series_from(&self.values)
    }

    fn score_series(&self) -> ScoreSeries {
        let start = self.next_ts - self.scores.len() as i64 * self.interval;
        ScoreSeries::new(
            Axis { start, interval: self.interval },
            self.scores.iter().copied().collect(),
        )
        .expect("scores are finite")
    }

    fn check_drift(&self) -> DriftStatus {
        let live_scores = self.score_series();
        let recent = self.cfg.drift_check_every.min(self.residuals.len());
        let residuals = self.series_from(&self.residuals);
        let recent_residuals = residuals
            .slice(residuals.len() - recent, residuals.len())
            .expect("non-empty");
        observe_two_tailed(
            &live_scores,
            &recent_residuals,
            (&self.left, &self.right),
            (&self.cfg.ath_left, &self.cfg.ath_right),
            &self.baseline,
        )
    }

    fn react(&mut self, status: &DriftStatus) -> Result<()> {
        match &status.kind {
            DriftKind::None => Ok(()),
            DriftKind::ConstraintViolation(violations) => {
                let scores = self.score_series();
                for v in violations {
                    let d = select_tail(&scores, &self.cfg, v.tail)?;
                    match v.tail {
                        Tail::Left => self.left = d,
                        Tail::Right => self.right = d,
                    }
                }
                Ok(())
            }
            DriftKind::RangeShrink { .. } => {
                // The recent drift span is the new regime: refit on it alone.
                if let Ok(f) = fit_forecaster(&self.values_series(), &self.cfg) {
                    self.forecaster = f;
                }
                let keep = self.cfg.drift_check_every.min(self.values.len());
                let residuals = trailing_residuals(&self.values_series(), &self.forecaster, keep);
                let previous = (self.scorer, self.left, self.right);
                if self.refit_detector(residuals).is_err() {
                    // Degenerate recent window: keep the standing models.
                    (self.scorer, self.left, self.right) = previous;
                    return Ok(());
                }
                self.baseline = RangeBaseline::from_residuals(
                    &self.residuals.iter().copied().collect::<Vec<_>>(),
                    self.cfg.shrink_factor,
                );
                Ok(())
            }
        }
    }

    /// Refits the scorer on `residuals` (the trailing detector window),
    /// rescoring it and reselecting both thresholds.
    fn refit_detector(&mut self, residuals: Vec<f64>) -> Result<()> {
        let scorer = fit_zscore(&residuals)?;
        if scorer.is_degenerate() {
            return Err(Error::DegenerateWindow);
        }
        let start = self.next_ts - residuals.len() as i64 * self.interval;
        let scores: Vec<f64> = residuals.iter().map(|&r| scorer.score(r)).collect();
        let score_series = ScoreSeries::new(Axis { start, interval: self.interval }, scores.clone())?;
        let (left, right) = select_thresholds(&score_series, &self.cfg)?;
        self.scorer = scorer;
        self.left = left;
        self.right = right;
        self.residuals = residuals.into_iter().collect();
        self.scores = scores.into_iter().collect();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SECONDS_PER_DAY;

    fn seasonal(days: usize, seed: u64) -> TimeSeries {
        let n = days * 96;
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let values = (0..n)
            .map(|i| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                let phase = (i % 96) as f64 / 96.0 * std::f64::consts::TAU;
                100.0 + 30.0 * phase.sin() + 4.0 * u
            })
            .collect();
        TimeSeries::new(1_675_209_600, 900, values).unwrap()
    }

    #[test]
    fn warm_up_produces_finite_thresholds() {
        let h = seasonal(28, 1);
        let st = warm_up(&h, &PipelineConfig::default()).unwrap();
        let (l, r) = st.thresholds();
        assert!(l.is_finite() && r.is_finite() && l < r);
        assert_eq!(st.window_lens(), (28 * 96, 7 * 96, 7 * 96));
    }

    #[test]
    fn warm_up_errors() {
        let short = seasonal(7, 1);
        match warm_up_stream("kpi-x", &short, &PipelineConfig::default()) {
            Err(Error::Stream { id, source }) => {
                assert_eq!(id, "kpi-x");
                assert!(matches!(*source, Error::InsufficientHistory { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
        let flat = TimeSeries::new(0, 900, vec![3.0; 28 * 96]).unwrap();
        match warm_up_stream("flat", &flat, &PipelineConfig::default()) {
            Err(Error::Stream { id, source }) => {
                assert_eq!(id, "flat");
                assert!(matches!(*source, Error::DegenerateWindow));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = PipelineConfig {
            detector_window: 30 * SECONDS_PER_DAY,
            ..PipelineConfig::default()
        };
        assert!(matches!(warm_up(&seasonal(35, 1), &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn step_rejects_gaps_and_labels_spikes() {
        let h = seasonal(28, 2);
        let mut st = warm_up(&h, &PipelineConfig::default()).unwrap();
        let t0 = st.next_timestamp();
        assert!(matches!(st.step(t0 + 900, 1.0), Err(Error::OutOfOrder { .. })));
        let normal = st.step(t0, 100.0 + 0.0).unwrap();
        assert_eq!(normal.label, AnomalyLabel::Normal);
        assert!(normal.drift_event.is_none());
        let t1 = st.next_timestamp();
        let phase = (((t1 - h.start()) / 900) % 96) as f64 / 96.0 * std::f64::consts::TAU;
        let spike = st.step(t1, 100.0 + 30.0 * phase.sin() + 60.0).unwrap();
        assert_eq!(spike.label, AnomalyLabel::Right);
    }

    #[test]
    fn windows_stay_bounded() {
        let all = seasonal(40, 3);
        let (h, rest) = (all.slice(0, 28 * 96).unwrap(), all.slice(28 * 96, all.len()).unwrap());
        let mut st = warm_up(&h, &PipelineConfig::default()).unwrap();
        let caps = st.window_caps();
        for i in 0..rest.len() {
            st.step(rest.timestamp_of(i), rest.values()[i]).unwrap();
            let (v, r, s) = st.window_lens();
            assert!(v <= caps.0 && r <= caps.1 && s <= caps.1);
        }
    }

    #[test]
    fn naive_forecaster_streams() {
        let cfg = PipelineConfig {
            forecaster: ForecasterKind::Naive,
            forecaster_window: 7 * SECONDS_PER_DAY,
            ..PipelineConfig::default()
        };
        let all = seasonal(10, 4);
        let h = all.slice(0, 7 * 96).unwrap();
        let rest = all.slice(7 * 96, all.len()).unwrap();
        let mut st = warm_up(&h, &cfg).unwrap();
        let batch = st.label_batch(&rest).unwrap();
        let cfg_nodrift = PipelineConfig { drift_check_every: 0, ..cfg };
        let mut st2 = warm_up(&h, &cfg_nodrift).unwrap();
        let streamed: Vec<_> = st2.run(&rest).unwrap().into_iter().map(|v| v.label).collect();
        assert_eq!(batch, streamed);
        let _ = st.run(&rest).unwrap();
    }

    #[test]
    fn pot_candidate_source() {
        let cfg = PipelineConfig {
            candidate_source: CandidateSource::PotPeaks(0.98),
            ..PipelineConfig::default()
        };
        let st = warm_up(&seasonal(28, 5), &cfg).unwrap();
        let (l, r) = st.thresholds();
        assert!(l < 0.0 && r > 0.0);
    }
}
