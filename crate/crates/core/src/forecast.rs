//! Seasonal quartile forecaster: per (weekday, time-of-day slot) quartiles of
//! the training window, forecasting the bucket median. Also a persistence
//! baseline for KPIs without usable seasonality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{TimeSeries, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::stats::{quantile_sorted, sorted_copy};

pub const WEEK_SECONDS: i64 = 7 * SECONDS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalQuartileModel {
    slot_seconds: i64,
    slots_per_day: usize,
    /// Indexed by `day_of_week * slots_per_day + slot`.
    buckets: Vec<BucketStats>,
    /// Half-open `[start, end)` of the training window.
    fitted_on: (i64, i64),
}

/// Monday = 0 ... Sunday = 6, UTC.
pub fn day_of_week(t: i64) -> u32 {
    // 1970-01-01 was a Thursday.
    (t.div_euclid(SECONDS_PER_DAY) + 3).rem_euclid(7) as u32
}

/// Smallest whole-hour slot that covers `interval` and divides a day.
pub fn default_slot_seconds(interval: i64) -> i64 {
    (1..=24)
        .map(|h| h * SECONDS_PER_HOUR)
        .find(|&s| s >= interval && SECONDS_PER_DAY % s == 0)
        .unwrap_or(SECONDS_PER_DAY)
}

impl SeasonalQuartileModel {
    pub fn slot_seconds(&self) -> i64 {
        self.slot_seconds
    }

    pub fn fitted_on(&self) -> (i64, i64) {
        self.fitted_on
    }

    pub fn bucket_key(&self, t: i64) -> (u32, u32) {
        let slot = t.rem_euclid(SECONDS_PER_DAY) / self.slot_seconds;
        (day_of_week(t), slot as u32)
    }

    fn bucket_pos(&self, t: i64) -> usize {
        let (dow, slot) = self.bucket_key(t);
        dow as usize * self.slots_per_day + slot as usize
    }

    pub fn bucket_stats(&self, t: i64) -> BucketStats {
        self.buckets[self.bucket_pos(t)]
    }

    pub fn forecast(&self, t: i64) -> f64 {
        self.buckets[self.bucket_pos(t)].median
    }
}

pub fn fit_seasonal_quartile(train: &TimeSeries, slot_seconds: i64) -> Result<SeasonalQuartileModel> {
    if slot_seconds <= 0 || SECONDS_PER_DAY % slot_seconds != 0 {
        return Err(Error::InvalidConfig(format!(
            "slot duration {slot_seconds} s must divide one day"
        )));
    }
    let span = train.span_seconds();
    if span < WEEK_SECONDS {
        return Err(Error::SpanTooShort {
            span_s: span,
            required_s: WEEK_SECONDS,
        });
    }
    let slots_per_day = (SECONDS_PER_DAY / slot_seconds) as usize;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 7 * slots_per_day];
    let mut model = SeasonalQuartileModel {
        slot_seconds,
        slots_per_day,
        buckets: Vec::new(),
        fitted_on: (train.start(), train.end()),
    };
    for (i, &v) in train.values().iter().enumerate() {
        groups[model.bucket_pos(train.timestamp_of(i))].push(v);
    }
    let mut buckets = Vec::with_capacity(groups.len());
    for (pos, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::EmptyBucket {
                day_of_week: (pos / slots_per_day) as u32,
                slot: (pos % slots_per_day) as u32,
            });
        }
        let s = sorted_copy(g);
        buckets.push(BucketStats {
            q1: quantile_sorted(&s, 0.25).unwrap(),
            median: quantile_sorted(&s, 0.5).unwrap(),
            q3: quantile_sorted(&s, 0.75).unwrap(),
        });
    }
    model.buckets = buckets;
    Ok(model)
}

/// Observed minus forecast, on the series' own axis.
pub fn residuals(series: &TimeSeries, model: &SeasonalQuartileModel) -> TimeSeries {
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| v - model.forecast(series.timestamp_of(i)))
        .collect();
    TimeSeries::new(series.start(), series.interval(), values)
        .expect("residuals of a valid series are valid")
}

/// Persistence forecast: each point predicts the next; the first predicts itself.
pub fn naive_forecast(series: &TimeSeries) -> TimeSeries {
    let v = series.values();
    let values = std::iter::once(v[0]).chain(v[..v.len() - 1].iter().copied()).collect();
    TimeSeries::new(series.start(), series.interval(), values).expect("non-empty series")
}

pub fn naive_residuals(series: &TimeSeries) -> TimeSeries {
    let fc = naive_forecast(series);
    let values = series
        .values()
        .iter()
        .zip(fc.values())
        .map(|(v, f)| v - f)
        .collect();
    TimeSeries::new(series.start(), series.interval(), values).expect("non-empty series")
}
