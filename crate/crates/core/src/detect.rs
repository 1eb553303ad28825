//! Residual scoring (Z-Score) and peaks-over-threshold candidate lists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{ScoreSeries, Tail, TimeSeries};
use crate::stats::{quantile_sorted, sorted_copy};

pub const DEFAULT_POT_QUANTILE: f64 = 0.98;

/// Window mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScoreModel {
    pub mu: f64,
    pub sigma: f64,
}

impl ZScoreModel {
    #[inline]
    pub fn score(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    /// Residual-scale value corresponding to score `z`.
    pub fn unscore(&self, z: f64) -> f64 {
        self.mu + z * self.sigma
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma.is_nan() || self.sigma <= 0.0
    }
}

pub fn fit_zscore(residuals: &[f64]) -> Result<ZScoreModel> {
    if residuals.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: residuals.len(),
        });
    }
    let n = residuals.len() as f64;
    let mu = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    Ok(ZScoreModel {
        mu,
        sigma: var.sqrt(),
    })
}

pub fn score_zscore(model: &ZScoreModel, residuals: &TimeSeries) -> Result<ScoreSeries> {
    if model.is_degenerate() {
        return Err(Error::DegenerateWindow);
    }
    let scores = residuals.values().iter().map(|&x| model.score(x)).collect();
    ScoreSeries::new(residuals.axis(), scores)
}

/// Distinct scores beyond the `initial_quantile` level (mirrored for the left
/// tail), most extreme first, followed by the quantile itself.
pub fn pot_candidates(scores: &ScoreSeries, initial_quantile: f64, tail: Tail) -> Result<Vec<f64>> {
    if !(initial_quantile > 0.0 && initial_quantile < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "initial quantile must lie in (0, 1), got {initial_quantile}"
        )));
    }
    if scores.len() < 10 {
        return Err(Error::TooFewPoints {
            needed: 10,
            got: scores.len(),
        });
    }
    let sorted = sorted_copy(scores.scores());
    let level = match tail {
        Tail::Right => quantile_sorted(&sorted, initial_quantile),
        Tail::Left => quantile_sorted(&sorted, 1.0 - initial_quantile),
    }
    .expect("non-empty");
    let mut peaks: Vec<f64> = sorted.into_iter().filter(|&s| tail.beyond(s, level)).collect();
    peaks.sort_unstable_by(|a, b| tail.extreme_first(*a, *b));
    peaks.dedup();
    peaks.push(level);
    Ok(peaks)
}
