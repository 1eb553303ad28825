//! Test-only brute-force references and instance generators. Nothing here
//! calls into the library's selection or histogram code.

#![allow(dead_code)]

use std::collections::HashMap;

use ath_core::{AthConfig, Axis, BucketGranularity, ScoreSeries, Tail};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn width(g: BucketGranularity) -> i64 {
    match g {
        BucketGranularity::Day => 86_400,
        BucketGranularity::MultiHour(h) => 3_600 * h as i64,
    }
}

fn beyond(tail: Tail, s: f64, t: f64) -> bool {
    match tail {
        Tail::Left => s < t,
        Tail::Right => s > t,
    }
}

/// Both constraints evaluated from scratch for the outlier set of `thresh`.
pub fn violates(scores: &[f64], axis: Axis, thresh: f64, cfg: &AthConfig) -> bool {
    let n = scores.len();
    let outliers: Vec<usize> = (0..n).filter(|&i| beyond(cfg.tail, scores[i], thresh)).collect();
    if outliers.len() as f64 / n as f64 > cfg.proportion_limit {
        return true;
    }
    let reps: Vec<usize> = outliers
        .iter()
        .enumerate()
        .filter(|&(k, &i)| k == 0 || outliers[k - 1] + 1 != i)
        .map(|(_, &i)| i)
        .collect();
    let w = width(cfg.granularity);
    let day = |i: usize| (axis.start + i as i64 * axis.interval).div_euclid(w);
    let mut freq: HashMap<i64, u64> = HashMap::new();
    for a in 0..reps.len() {
        for b in a + 1..reps.len() {
            let d = day(reps[b]) - day(reps[a]);
            if d != 0 {
                *freq.entry(d).or_default() += 1;
            }
        }
    }
    freq.values().any(|&f| f > cfg.periodicity_limit as u64)
}

/// Walks `candidates` (already deduplicated and tail-ordered) and returns the
/// last threshold before the first violation.
pub fn oracle_walk(scores: &[f64], axis: Axis, candidates: &[f64], cfg: &AthConfig) -> f64 {
    let mut previous = candidates[0];
    for &c in candidates {
        if violates(scores, axis, c, cfg) {
            return previous;
        }
        previous = c;
    }
    previous
}

pub fn tail_sorted_unique(values: &[f64], tail: Tail) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    if tail == Tail::Right {
        v.reverse();
    }
    v
}

pub fn oracle_ath(scores: &ScoreSeries, cfg: &AthConfig) -> f64 {
    let s = scores.scores();
    oracle_walk(s, scores.axis(), &tail_sorted_unique(s, cfg.tail), cfg)
}

/// A random thresholding problem: mixed continuous/discrete scores with
/// optional periodic bursts and runs, on a random axis and config.
pub struct Instance {
    pub scores: ScoreSeries,
    pub cfg: AthConfig,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=200usize);
    let interval = [300i64, 900, 1800, 3600, 7200, 21_600][rng.random_range(0..6)];
    let start = rng.random_range(-200_000i64..200_000);
    let discrete = rng.random_bool(0.4);
    let mut scores: Vec<f64> = (0..n)
        .map(|_| {
            if discrete {
                rng.random_range(0..6) as f64
            } else {
                rng.random_range(-3.0..3.0)
            }
        })
        .collect();
    if rng.random_bool(0.5) && n > 4 {
        let period = rng.random_range(2..=(n / 2).max(2));
        let phase = rng.random_range(0..period);
        let level = rng.random_range(3.0..8.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut i = phase;
        while i < n {
            scores[i] = sign * level;
            if rng.random_bool(0.3) && i + 1 < n {
                scores[i + 1] = sign * level;
            }
            i += period;
        }
    }
    let tail = if rng.random_bool(0.5) { Tail::Left } else { Tail::Right };
    let granularity = if rng.random_bool(0.5) {
        BucketGranularity::Day
    } else {
        BucketGranularity::MultiHour([1u32, 2, 3, 4, 6, 8, 12][rng.random_range(0..7)])
    };
    let cfg = AthConfig::new(tail)
        .with_limits(rng.random_range(1..=4), rng.random_range(0.005..0.45))
        .with_granularity(granularity);
    Instance {
        scores: ScoreSeries::new(Axis::new(start, interval).unwrap(), scores).unwrap(),
        cfg,
    }
}

/// Hourly series with `spike` at noon on each listed day, 1.0 elsewhere.
pub fn noon_spikes(days: &[usize], total_days: usize, spike: f64) -> ScoreSeries {
    let mut v = vec![1.0; total_days * 24];
    for &d in days {
        v[d * 24 + 12] = spike;
    }
    ScoreSeries::new(Axis::new(0, 3600).unwrap(), v).unwrap()
}

pub fn report(id: &str, what: &str, pass: bool, detail: &str) {
    println!("[{}] {id} {what}: {detail}", if pass { "PASS" } else { "FAIL" });
}
