//! KPI CSV ingestion/emission (`timestamp,value[,label]`) and a deterministic
//! generator for labeled seasonal and stochastic KPIs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::ath::{collapse_consecutive_runs, temporal_diff_histogram};
use crate::error::{Error, Result};
use crate::forecast::{fit_seasonal_quartile, residuals};
use crate::series::{AnomalyLabel, Axis, BucketGranularity, TimeSeries, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::stats::iqr;

/// 2023-02-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_675_209_600;
pub const DEFAULT_INTERVAL: i64 = 900;
pub const SPLIT_DAYS: [i64; 3] = [28, 31, 30];

const ISO_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Half-open `[start, end)` time ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: (i64, i64),
    pub val: (i64, i64),
    pub test: (i64, i64),
}

impl Splits {
    /// Month-long train/validation/test periods (28, 31 and the remaining
    /// days). Series too short for that are split proportionally.
    pub fn standard(start: i64, end: i64) -> Splits {
        let t1 = start + SPLIT_DAYS[0] * SECONDS_PER_DAY;
        let t2 = t1 + SPLIT_DAYS[1] * SECONDS_PER_DAY;
        if t2 < end {
            return Splits {
                train: (start, t1),
                val: (t1, t2),
                test: (t2, end),
            };
        }
        let total: i64 = SPLIT_DAYS.iter().sum();
        let span = end - start;
        let t1 = start + span * SPLIT_DAYS[0] / total;
        let t2 = start + span * (SPLIT_DAYS[0] + SPLIT_DAYS[1]) / total;
        Splits {
            train: (start, t1),
            val: (t1, t2),
            test: (t2, end),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub kpi_id: String,
    pub series: TimeSeries,
    pub labels: Vec<AnomalyLabel>,
    pub splits: Splits,
}

impl LabeledDataset {
    pub fn new(kpi_id: impl Into<String>, series: TimeSeries, labels: Vec<AnomalyLabel>) -> Result<Self> {
        if labels.len() != series.len() {
            return Err(Error::LengthMismatch {
                left: series.len(),
                right: labels.len(),
            });
        }
        let splits = Splits::standard(series.start(), series.end());
        Ok(LabeledDataset {
            kpi_id: kpi_id.into(),
            series,
            labels,
            splits,
        })
    }

    /// Series and labels restricted to `[from, to)`.
    pub fn range(&self, (from, to): (i64, i64)) -> Result<(TimeSeries, &[AnomalyLabel])> {
        let sub = self.series.slice_time(from, to)?;
        let lo = ((sub.start() - self.series.start()) / self.series.interval()) as usize;
        Ok((sub.clone(), &self.labels[lo..lo + sub.len()]))
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_anomaly()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TimestampFormat {
    #[default]
    Iso8601,
    Epoch,
}

/// Column names to read; defaults to `timestamp`, `value`, `label`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvColumns {
    pub timestamp: String,
    pub value: String,
    pub label: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        CsvColumns {
            timestamp: "timestamp".into(),
            value: "value".into(),
            label: "label".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    pub columns: CsvColumns,
    /// Expected spacing in seconds; inferred from the first two rows if absent.
    pub interval: Option<i64>,
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_csv_with(path, &ReadOptions::default())
}

pub fn read_csv_with(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let kpi_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "kpi".into());
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_csv(&kpi_id, text.as_bytes(), opts)
}

fn parse_timestamp(raw: &str, format: TimestampFormat, line: usize) -> Result<i64> {
    let bad = |msg: &str| Error::Malformed {
        line,
        msg: format!("{msg}: {raw:?}"),
    };
    match format {
        TimestampFormat::Epoch => raw.parse::<i64>().map_err(|_| bad("expected epoch seconds")),
        TimestampFormat::Iso8601 => NaiveDateTime::parse_from_str(raw, ISO_FORMAT)
            .map(|dt| dt.and_utc().timestamp())
            .map_err(|_| bad("expected YYYY-MM-DDTHH:MM:SSZ")),
    }
}

pub fn format_timestamp(t: i64, format: TimestampFormat) -> String {
    match format {
        TimestampFormat::Epoch => t.to_string(),
        TimestampFormat::Iso8601 => DateTime::from_timestamp(t, 0)
            .map(|d| d.format(ISO_FORMAT).to_string())
            .unwrap_or_else(|| t.to_string()),
    }
}

/// Parses CSV text; the first data row fixes the timestamp format.
pub fn parse_csv(kpi_id: &str, data: &[u8], opts: &ReadOptions) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(data);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Malformed { line: 1, msg: e.to_string() })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ts_col = col(&opts.columns.timestamp).ok_or_else(|| Error::Malformed {
        line: 1,
        msg: format!("missing column {:?}", opts.columns.timestamp),
    })?;
    let value_col = col(&opts.columns.value).ok_or_else(|| Error::Malformed {
        line: 1,
        msg: format!("missing column {:?}", opts.columns.value),
    })?;
    let label_col = col(&opts.columns.label);

    let mut format = None;
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut lines = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let fallback_line = k + 2;
        let rec = rec.map_err(|e| Error::Malformed {
            line: e.position().map_or(fallback_line, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(fallback_line, |p| p.line() as usize);
        let field = |c: usize| {
            rec.get(c).ok_or_else(|| Error::Malformed {
                line,
                msg: "missing field".into(),
            })
        };
        let raw_ts = field(ts_col)?;
        let fmt = *format.get_or_insert(if raw_ts.parse::<i64>().is_ok() {
            TimestampFormat::Epoch
        } else {
            TimestampFormat::Iso8601
        });
        stamps.push(parse_timestamp(raw_ts, fmt, line)?);
        let raw_value = field(value_col)?;
        let v: f64 = raw_value.parse().map_err(|_| Error::Malformed {
            line,
            msg: format!("bad value {raw_value:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Malformed {
                line,
                msg: format!("non-finite value {raw_value:?}"),
            });
        }
        values.push(v);
        let label = match label_col.map(|c| rec.get(c).unwrap_or("")) {
            None | Some("") => AnomalyLabel::Normal,
            Some(code) => code
                .parse::<i64>()
                .ok()
                .and_then(AnomalyLabel::from_code)
                .ok_or_else(|| Error::UnknownLabel {
                    line,
                    code: code.to_string(),
                })?,
        };
        labels.push(label);
        lines.push(line);
    }
    if stamps.is_empty() {
        return Err(Error::EmptySeries);
    }
    let interval = match opts.interval {
        Some(i) => i,
        None if stamps.len() >= 2 => stamps[1] - stamps[0],
        None => DEFAULT_INTERVAL,
    };
    if interval <= 0 {
        return Err(Error::Cadence {
            line: lines.get(1).copied().unwrap_or(2),
            expected: stamps[0] + DEFAULT_INTERVAL.max(1),
            found: stamps.get(1).copied().unwrap_or(stamps[0]),
        });
    }
    for k in 1..stamps.len() {
        let expected = stamps[k - 1] + interval;
        if stamps[k] != expected {
            return Err(Error::Cadence {
                line: lines[k],
                expected,
                found: stamps[k],
            });
        }
    }
    let series = TimeSeries::new(stamps[0], interval, values)?;
    LabeledDataset::new(kpi_id, series, labels)
}

/// Writes `timestamp,value,label`; values use the shortest round-trip form.
pub fn write_csv(dataset: &LabeledDataset, path: impl AsRef<Path>, format: TimestampFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(dataset, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to(dataset: &LabeledDataset, w: &mut impl Write, format: TimestampFormat) -> Result<()> {
    writeln!(w, "timestamp,value,label")?;
    for (i, (v, l)) in dataset.series.values().iter().zip(&dataset.labels).enumerate() {
        let t = format_timestamp(dataset.series.timestamp_of(i), format);
        writeln!(w, "{t},{v},{}", l.code())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Seasonal,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailMix {
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: Family,
    pub seed: u64,
    pub start: i64,
    pub interval: i64,
    pub span: i64,
    pub anomaly_rate: f64,
    /// Injected offset in multiples of the clean residual IQR.
    pub anomaly_magnitude: f64,
    pub tails: TailMix,
}

impl SyntheticSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        SyntheticSpec {
            family,
            seed,
            start: DEFAULT_START,
            interval: DEFAULT_INTERVAL,
            span: SPLIT_DAYS.iter().sum::<i64>() * SECONDS_PER_DAY,
            anomaly_rate: 0.003,
            anomaly_magnitude: 8.0,
            tails: TailMix::Both,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.interval <= 0 {
            return Err(Error::NonPositiveInterval(self.interval));
        }
        if !(0.0..0.5).contains(&self.anomaly_rate) {
            return Err(Error::InvalidConfig(format!(
                "anomaly_rate must lie in [0, 0.5), got {}",
                self.anomaly_rate
            )));
        }
        if self.anomaly_magnitude.is_nan() || self.anomaly_magnitude <= 3.0 || self.anomaly_magnitude.is_infinite() {
            return Err(Error::InvalidConfig(format!(
                "anomaly_magnitude must exceed 3, got {}",
                self.anomaly_magnitude
            )));
        }
        if self.span < 7 * SECONDS_PER_DAY {
            return Err(Error::SpanTooShort {
                span_s: self.span,
                required_s: 7 * SECONDS_PER_DAY,
            });
        }
        Ok(())
    }
}

/// Days over which injected anomalies must stay aperiodic.
pub const APERIODIC_WINDOW_DAYS: i64 = 7;
/// Maximum frequency of any pairwise day difference inside such a window.
pub const MAX_INJECTED_DIFF_REPEATS: u64 = 2;

/// Clean signal for `spec` (no anomalies).
fn clean_signal(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (spec.span / spec.interval) as usize;
    match spec.family {
        Family::Seasonal => {
            let level = rng.random_range(100.0..500.0);
            let amplitude = level * rng.random_range(0.3..0.6);
            let peak_hour = rng.random_range(12.0..20.0);
            let weekend = rng.random_range(0.6..0.85);
            let noise = Normal::new(0.0, level * rng.random_range(0.02..0.04)).expect("valid sigma");
            (0..n)
                .map(|i| {
                    let t = spec.start + i as i64 * spec.interval;
                    let hour = t.rem_euclid(SECONDS_PER_DAY) as f64 / SECONDS_PER_HOUR as f64;
                    let daily = 0.5 * (1.0 + ((hour - peak_hour) / 24.0 * std::f64::consts::TAU).cos());
                    let dow = crate::forecast::day_of_week(t);
                    let factor = if dow >= 5 { weekend } else { 1.0 };
                    level + amplitude * daily * factor + noise.sample(rng)
                })
                .collect()
        }
        Family::Stochastic => {
            let level = rng.random_range(5.0..50.0);
            let shape = LogNormal::new(0.0, rng.random_range(0.2..0.4)).expect("valid sigma");
            (0..n).map(|_| level * shape.sample(rng)).collect()
        }
    }
}

fn aperiodic(positions: &BTreeSet<usize>, axis: Axis) -> bool {
    let idx: Vec<usize> = positions.iter().copied().collect();
    let window = APERIODIC_WINDOW_DAYS * SECONDS_PER_DAY;
    for (k, &a) in idx.iter().enumerate() {
        let limit = axis.timestamp_of(a) + window;
        let members: Vec<usize> = idx[k..]
            .iter()
            .copied()
            .take_while(|&j| axis.timestamp_of(j) < limit)
            .collect();
        let reps = collapse_consecutive_runs(&members);
        let hist = temporal_diff_histogram(&reps, axis, BucketGranularity::Day);
        if hist.values().any(|&f| f > MAX_INJECTED_DIFF_REPEATS) {
            return false;
        }
    }
    true
}

/// Deterministic labeled KPI. Anomalies sit at isolated, aperiodic positions
/// and are offset by `anomaly_magnitude` clean residual IQRs.
pub fn generate_synthetic(kpi_id: &str, spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = clean_signal(spec, &mut rng);
    let n = values.len();
    let clean = TimeSeries::new(spec.start, spec.interval, values.clone())?;
    let model = fit_seasonal_quartile(&clean, SECONDS_PER_HOUR)?;
    let clean_resid = residuals(&clean, &model);
    let scale = iqr(clean_resid.values()).unwrap_or(0.0);

    let target = (spec.anomaly_rate * n as f64).round() as usize;
    let mut positions = BTreeSet::new();
    let mut attempts = 0usize;
    while positions.len() < target {
        attempts += 1;
        if attempts > 10_000 * target.max(1) {
            return Err(Error::InvalidConfig(format!(
                "could not place {target} aperiodic anomalies in {n} points"
            )));
        }
        let i = rng.random_range(0..n);
        let crowded = positions.range(i.saturating_sub(1)..=i + 1).next().is_some();
        if crowded || clean_resid.values()[i].abs() > 2.0 * scale {
            continue;
        }
        positions.insert(i);
        if !aperiodic(&positions, clean.axis()) {
            positions.remove(&i);
        }
    }

    let mut labels = vec![AnomalyLabel::Normal; n];
    for &i in &positions {
        let up = match spec.tails {
            TailMix::Left => false,
            TailMix::Right => true,
            TailMix::Both => rng.random_bool(0.5),
        };
        let sign = if up { 1.0 } else { -1.0 };
        values[i] += sign * spec.anomaly_magnitude * scale;
        labels[i] = if up { AnomalyLabel::Right } else { AnomalyLabel::Left };
    }
    let series = TimeSeries::new(spec.start, spec.interval, values)?;
    LabeledDataset::new(kpi_id, series, labels)
}

/// Ten KPIs: six seasonal (`kpi_A`..`kpi_F`) and four stochastic (`kpi_G`..`kpi_J`).
pub fn default_suite_specs(seed: u64) -> Vec<(String, SyntheticSpec)> {
    (0..10u64)
        .map(|k| {
            let family = if k < 6 { Family::Seasonal } else { Family::Stochastic };
            let name = format!("kpi_{}", (b'A' + k as u8) as char);
            (name, SyntheticSpec::new(family, seed.wrapping_mul(1000).wrapping_add(k)))
        })
        .collect()
}

pub fn default_suite(seed: u64) -> Result<Vec<LabeledDataset>> {
    default_suite_specs(seed)
        .iter()
        .map(|(name, spec)| generate_synthetic(name, spec))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LabeledDataset> {
        parse_csv("t", text.as_bytes(), &ReadOptions::default())
    }

    #[test]
    fn three_rows() {
        let d = parse("timestamp,value,label\n2023-02-01T00:00:00Z,1.5,0\n2023-02-01T00:15:00Z,2,1\n2023-02-01T00:30:00Z,3,-1\n").unwrap();
        assert_eq!(d.series.len(), 3);
        assert_eq!(d.series.interval(), 900);
        assert_eq!(d.series.start(), DEFAULT_START);
        assert_eq!(d.labels, vec![AnomalyLabel::Normal, AnomalyLabel::Right, AnomalyLabel::Left]);
    }

    #[test]
    fn epoch_without_labels() {
        let d = parse("timestamp,value\n0,1\n900,2\n").unwrap();
        assert_eq!(d.series.start(), 0);
        assert!(d.labels.iter().all(|l| !l.is_anomaly()));
    }

    #[test]
    fn unknown_label() {
        match parse("timestamp,value,label\n0,1,0\n900,2,2\n") {
            Err(Error::UnknownLabel { line, code }) => {
                assert_eq!(line, 3);
                assert_eq!(code, "2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gap_is_named() {
        match parse("timestamp,value\n0,1\n900,2\n2700,3\n") {
            Err(Error::Cadence { line, expected, found }) => {
                assert_eq!((line, expected, found), (4, 1800, 2700));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(parse("timestamp,value\n0,abc\n"), Err(Error::Malformed { line: 2, .. })));
        assert!(matches!(parse("time,value\n0,1\n"), Err(Error::Malformed { line: 1, .. })));
        // Format is fixed by the first row.
        assert!(matches!(
            parse("timestamp,value\n0,1\n1970-01-01T00:15:00Z,2\n"),
            Err(Error::Malformed { line: 3, .. })
        ));
        assert!(matches!(parse("timestamp,value\n"), Err(Error::EmptySeries)));
    }

    #[test]
    fn remapped_columns() {
        let opts = ReadOptions {
            columns: CsvColumns {
                timestamp: "time".into(),
                value: "kpi".into(),
                label: "gt".into(),
            },
            interval: Some(900),
        };
        let d = parse_csv("x", b"time,kpi,gt\n0,1,0\n900,2,1\n", &opts).unwrap();
        assert_eq!(d.labels[1], AnomalyLabel::Right);
    }

    #[test]
    fn splits_standard_and_short() {
        let s = Splits::standard(0, 89 * SECONDS_PER_DAY);
        assert_eq!(s.train, (0, 28 * SECONDS_PER_DAY));
        assert_eq!(s.val, (28 * SECONDS_PER_DAY, 59 * SECONDS_PER_DAY));
        assert_eq!(s.test, (59 * SECONDS_PER_DAY, 89 * SECONDS_PER_DAY));
        let s = Splits::standard(0, 89);
        assert!(s.train.1 <= s.val.1 && s.val.1 <= s.test.1);
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = SyntheticSpec::new(Family::Seasonal, 42);
        let a = generate_synthetic("a", &spec).unwrap();
        let b = generate_synthetic("a", &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.series.len(), 89 * 96);
    }

    #[test]
    fn zero_rate_means_no_labels() {
        let spec = SyntheticSpec {
            anomaly_rate: 0.0,
            ..SyntheticSpec::new(Family::Stochastic, 3)
        };
        let d = generate_synthetic("s", &spec).unwrap();
        assert_eq!(d.anomaly_count(), 0);
    }

    #[test]
    fn injected_points_stand_out() {
        let spec = SyntheticSpec::new(Family::Seasonal, 7);
        let d = generate_synthetic("s", &spec).unwrap();
        let n = d.series.len();
        assert_eq!(d.anomaly_count(), (0.003 * n as f64).round() as usize);
        // Rebuild the clean signal from the same seed.
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let clean = TimeSeries::new(spec.start, spec.interval, clean_signal(&spec, &mut rng)).unwrap();
        let model = fit_seasonal_quartile(&clean, SECONDS_PER_HOUR).unwrap();
        let scale = iqr(residuals(&clean, &model).values()).unwrap();
        for (i, l) in d.labels.iter().enumerate() {
            if l.is_anomaly() {
                let dist = d.series.values()[i] - model.forecast(d.series.timestamp_of(i));
                assert!(dist.abs() >= 6.0 * scale, "point {i}: {dist} vs {scale}");
                assert_eq!(dist > 0.0, *l == AnomalyLabel::Right);
            } else {
                assert_eq!(d.series.values()[i], clean.values()[i]);
            }
        }
    }

    #[test]
    fn injected_points_are_isolated_and_aperiodic() {
        for (name, spec) in default_suite_specs(1) {
            let d = generate_synthetic(&name, &spec).unwrap();
            let pos: BTreeSet<usize> = d
                .labels
                .iter()
                .enumerate()
                .filter(|(_, l)| l.is_anomaly())
                .map(|(i, _)| i)
                .collect();
            let v: Vec<usize> = pos.iter().copied().collect();
            assert!(v.windows(2).all(|w| w[1] > w[0] + 1));
            assert!(aperiodic(&pos, d.series.axis()));
        }
    }

    #[test]
    fn invalid_specs() {
        let base = SyntheticSpec::new(Family::Seasonal, 1);
        assert!(generate_synthetic("x", &SyntheticSpec { span: 3 * SECONDS_PER_DAY, ..base }).is_err());
        assert!(generate_synthetic("x", &SyntheticSpec { anomaly_magnitude: 2.0, ..base }).is_err());
    }
}
