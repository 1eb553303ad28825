//! Flat `key = value` pipeline configuration. Blank lines and `#` comments
//! are ignored; unknown keys, duplicates and malformed values are errors.
//!
//! | key | value |
//! |-----|-------|
//! | `forecaster_window`, `detector_window` | duration (`28d`, `6h`, `30m`, `900s`, bare seconds) |
//! | `drift_check_every` | points between drift checks, `0` disables |
//! | `forecaster` | `seasonal_quartile` or `naive` |
//! | `slot` | seasonal slot duration, or `auto` |
//! | `scorer` | `zscore` |
//! | `candidates` | `all` or `pot` |
//! | `pot_quantile` | initial POT quantile in (0, 1) |
//! | `periodicity_limit`, `proportion_limit`, `granularity` | both tails |
//! | `left_*`, `right_*` variants of the three above | one tail |
//! | `shrink_factor` | in (0, 1) |
//! | `weekly_refit` | `true` or `false` |

use std::collections::HashSet;

use ath_core::pipeline::{CandidateSource, ForecasterKind, ScorerKind};
use ath_core::{AthConfig, BucketGranularity, PipelineConfig};

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ConfigError {
    pub line: usize,
    pub msg: String,
}

pub fn parse_duration(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    let (digits, unit) = match raw.find(|c: char| !c.is_ascii_digit()) {
        Some(k) => raw.split_at(k),
        None => (raw, "s"),
    };
    let n: i64 = digits.parse().ok()?;
    let scale = match unit {
        "s" => 1,
        "m" => 60,
        "h" => 3_600,
        "d" => 86_400,
        "w" => 604_800,
        _ => return None,
    };
    n.checked_mul(scale)
}

fn parse_granularity(raw: &str) -> Option<BucketGranularity> {
    match raw {
        "day" | "1d" | "24h" => Some(BucketGranularity::Day),
        _ => raw
            .strip_suffix('h')
            .and_then(|h| h.parse().ok())
            .map(BucketGranularity::MultiHour),
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

enum Which {
    Both,
    Left,
    Right,
}

pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = PipelineConfig::default();
    let mut pot_quantile = None;
    let mut use_pot = false;
    let mut seen = HashSet::new();
    for (k, raw_line) in text.lines().enumerate() {
        let line = k + 1;
        let err = |msg: String| ConfigError { line, msg };
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(a, b)| (a.trim(), b.trim()))
            .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        let bad = |what: &str| err(format!("{key}: expected {what}, got {value:?}"));
        let (which, base) = if let Some(rest) = key.strip_prefix("left_") {
            (Which::Left, rest)
        } else if let Some(rest) = key.strip_prefix("right_") {
            (Which::Right, rest)
        } else {
            (Which::Both, key)
        };
        let mut tails = |f: &dyn Fn(&mut AthConfig)| match which {
            Which::Both => {
                f(&mut cfg.ath_left);
                f(&mut cfg.ath_right);
            }
            Which::Left => f(&mut cfg.ath_left),
            Which::Right => f(&mut cfg.ath_right),
        };
        match base {
            "periodicity_limit" => {
                let p: u32 = value.parse().map_err(|_| bad("a non-negative integer"))?;
                tails(&|c| c.periodicity_limit = p);
                continue;
            }
            "proportion_limit" => {
                let q: f64 = value.parse().map_err(|_| bad("a number"))?;
                tails(&|c| c.proportion_limit = q);
                continue;
            }
            "granularity" => {
                let g = parse_granularity(value).ok_or_else(|| bad("day or <N>h"))?;
                tails(&|c| c.granularity = g);
                continue;
            }
            _ if !matches!(which, Which::Both) => return Err(err(format!("unknown key {key:?}"))),
            _ => {}
        }
        match key {
            "forecaster_window" => cfg.forecaster_window = parse_duration(value).ok_or_else(|| bad("a duration"))?,
            "detector_window" => cfg.detector_window = parse_duration(value).ok_or_else(|| bad("a duration"))?,
            "drift_check_every" => cfg.drift_check_every = value.parse().map_err(|_| bad("a point count"))?,
            "forecaster" => {
                cfg.forecaster = match value {
                    "seasonal_quartile" => match cfg.forecaster {
                        ForecasterKind::SeasonalQuartile { .. } => cfg.forecaster,
                        ForecasterKind::Naive => ForecasterKind::SeasonalQuartile { slot_seconds: None },
                    },
                    "naive" => ForecasterKind::Naive,
                    _ => return Err(bad("seasonal_quartile or naive")),
                }
            }
            "slot" => {
                let slot = match value {
                    "auto" => None,
                    _ => Some(parse_duration(value).ok_or_else(|| bad("a duration or auto"))?),
                };
                if let ForecasterKind::SeasonalQuartile { slot_seconds } = &mut cfg.forecaster {
                    *slot_seconds = slot;
                }
            }
            "scorer" => {
                cfg.scorer = match value {
                    "zscore" => ScorerKind::ZScore,
                    _ => return Err(bad("zscore")),
                }
            }
            "candidates" => {
                use_pot = match value {
                    "all" => false,
                    "pot" => true,
                    _ => return Err(bad("all or pot")),
                }
            }
            "pot_quantile" => pot_quantile = Some(value.parse::<f64>().map_err(|_| bad("a number"))?),
            "shrink_factor" => cfg.shrink_factor = value.parse().map_err(|_| bad("a number"))?,
            "weekly_refit" => cfg.weekly_refit = parse_bool(value).ok_or_else(|| bad("true or false"))?,
            _ => return Err(err(format!("unknown key {key:?}"))),
        }
    }
    if seen.contains("slot") && cfg.forecaster == ForecasterKind::Naive {
        return Err(ConfigError {
            line: 0,
            msg: "slot only applies to the seasonal_quartile forecaster".into(),
        });
    }
    cfg.candidate_source = match (use_pot, pot_quantile) {
        (true, q) => CandidateSource::PotPeaks(q.unwrap_or(ath_core::detect::DEFAULT_POT_QUANTILE)),
        (false, None) => CandidateSource::AllScores,
        (false, Some(_)) => {
            return Err(ConfigError {
                line: 0,
                msg: "pot_quantile requires candidates = pot".into(),
            })
        }
    };
    cfg.validate().map_err(|e| ConfigError { line: 0, msg: e.to_string() })?;
    Ok(cfg)
}
