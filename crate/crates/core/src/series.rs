//! Domain types shared by every stage: the regular time axis, value and score
//! series, tails, bucketing and the thresholding configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// Equally spaced UTC time axis: index `i` sits at `start + i * interval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub start: i64,
    pub interval: i64,
}

impl Axis {
    pub fn new(start: i64, interval: i64) -> Result<Self> {
        if interval <= 0 {
            return Err(Error::NonPositiveInterval(interval));
        }
        Ok(Axis { start, interval })
    }

    #[inline]
    pub fn timestamp_of(&self, index: usize) -> i64 {
        self.start + index as i64 * self.interval
    }

    /// Axis of the sub-window beginning at `offset`.
    pub fn shifted(&self, offset: usize) -> Axis {
        Axis {
            start: self.timestamp_of(offset),
            interval: self.interval,
        }
    }
}

/// A validated, gap-free univariate signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    axis: Axis,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: i64, interval: i64, values: Vec<f64>) -> Result<Self> {
        validate_series(start, interval, values)
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn start(&self) -> i64 {
        self.axis.start
    }

    pub fn interval(&self) -> i64 {
        self.axis.interval
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp_of(&self, index: usize) -> i64 {
        self.axis.timestamp_of(index)
    }

    /// Timestamp one past the last point.
    pub fn end(&self) -> i64 {
        self.axis.timestamp_of(self.values.len())
    }

    pub fn span_seconds(&self) -> i64 {
        self.values.len() as i64 * self.axis.interval
    }

    /// Points whose timestamps fall in `[from, to)`.
    pub fn slice_time(&self, from: i64, to: i64) -> Result<TimeSeries> {
        let lo = self.index_at_or_after(from);
        let hi = self.index_at_or_after(to).max(lo);
        self.slice(lo, hi)
    }

    pub fn slice(&self, lo: usize, hi: usize) -> Result<TimeSeries> {
        let hi = hi.min(self.values.len());
        if lo >= hi {
            return Err(Error::EmptySeries);
        }
        Ok(TimeSeries {
            axis: self.axis.shifted(lo),
            values: self.values[lo..hi].to_vec(),
        })
    }

    fn index_at_or_after(&self, t: i64) -> usize {
        if t <= self.axis.start {
            return 0;
        }
        let off = t - self.axis.start;
        let idx = (off + self.axis.interval - 1) / self.axis.interval;
        (idx as usize).min(self.values.len())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Checks every [`TimeSeries`] invariant and builds the series.
pub fn validate_series(start: i64, interval: i64, values: Vec<f64>) -> Result<TimeSeries> {
    let axis = Axis::new(start, interval)?;
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(TimeSeries { axis, values })
}

/// Per-point outlier scores on the axis of the series they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    axis: Axis,
    scores: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(axis: Axis, scores: Vec<f64>) -> Result<Self> {
        if axis.interval <= 0 {
            return Err(Error::NonPositiveInterval(axis.interval));
        }
        if let Some(index) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ScoreSeries { axis, scores })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Left,
    Right,
}

impl Tail {
    /// Whether `score` lies strictly beyond `threshold` on this tail.
    #[inline]
    pub fn beyond(self, score: f64, threshold: f64) -> bool {
        match self {
            Tail::Left => score < threshold,
            Tail::Right => score > threshold,
        }
    }

    /// Ordering that puts the most extreme values first.
    #[inline]
    pub fn extreme_first(self, a: f64, b: f64) -> std::cmp::Ordering {
        match self {
            Tail::Left => a.total_cmp(&b),
            Tail::Right => b.total_cmp(&a),
        }
    }

    pub fn label(self) -> AnomalyLabel {
        match self {
            Tail::Left => AnomalyLabel::Left,
            Tail::Right => AnomalyLabel::Right,
        }
    }
}

/// Temporal quantization used when differencing outlier occurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BucketGranularity {
    Day,
    MultiHour(u32),
}

impl BucketGranularity {
    pub fn width_seconds(self) -> i64 {
        match self {
            BucketGranularity::Day => SECONDS_PER_DAY,
            BucketGranularity::MultiHour(h) => SECONDS_PER_HOUR * h as i64,
        }
    }

    pub fn validate(self) -> Result<()> {
        if let BucketGranularity::MultiHour(h) = self {
            if !(1..=24).contains(&h) || 24 % h != 0 {
                return Err(Error::InvalidConfig(format!(
                    "multi-hour granularity must divide 24, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// UTC-aligned bucket containing epoch second `t`.
#[inline]
pub fn bucket_index(t: i64, g: BucketGranularity) -> i64 {
    t.div_euclid(g.width_seconds())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AthConfig {
    pub tail: Tail,
    pub periodicity_limit: u32,
    pub proportion_limit: f64,
    pub granularity: BucketGranularity,
}

impl AthConfig {
    pub const DEFAULT_PERIODICITY_LIMIT: u32 = 3;
    pub const DEFAULT_PROPORTION_LIMIT: f64 = 0.01;

    pub fn new(tail: Tail) -> Self {
        AthConfig {
            tail,
            periodicity_limit: Self::DEFAULT_PERIODICITY_LIMIT,
            proportion_limit: Self::DEFAULT_PROPORTION_LIMIT,
            granularity: BucketGranularity::Day,
        }
    }

    pub fn left() -> Self {
        Self::new(Tail::Left)
    }

    pub fn right() -> Self {
        Self::new(Tail::Right)
    }

    pub fn with_limits(mut self, periodicity_limit: u32, proportion_limit: f64) -> Self {
        self.periodicity_limit = periodicity_limit;
        self.proportion_limit = proportion_limit;
        self
    }

    pub fn with_granularity(mut self, granularity: BucketGranularity) -> Self {
        self.granularity = granularity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.proportion_limit > 0.0 && self.proportion_limit < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "proportion_limit must lie in (0, 0.5), got {}",
                self.proportion_limit
            )));
        }
        if self.periodicity_limit < 1 {
            return Err(Error::InvalidConfig(
                "periodicity_limit must be at least 1".into(),
            ));
        }
        self.granularity.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum AnomalyLabel {
    Left,
    Normal,
    Right,
}

impl AnomalyLabel {
    pub fn code(self) -> i8 {
        match self {
            AnomalyLabel::Left => -1,
            AnomalyLabel::Normal => 0,
            AnomalyLabel::Right => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(AnomalyLabel::Left),
            0 => Some(AnomalyLabel::Normal),
            1 => Some(AnomalyLabel::Right),
            _ => None,
        }
    }

    pub fn is_anomaly(self) -> bool {
        self != AnomalyLabel::Normal
    }
}

impl From<AnomalyLabel> for i8 {
    fn from(l: AnomalyLabel) -> i8 {
        l.code()
    }
}

impl TryFrom<i8> for AnomalyLabel {
    type Error = String;
    fn try_from(code: i8) -> std::result::Result<Self, String> {
        AnomalyLabel::from_code(code as i64).ok_or_else(|| format!("unknown label {code}"))
    }
}
