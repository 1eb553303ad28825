//! Point-wise precision/recall/F1 and the dataset x config benchmark grid.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{format_timestamp, LabeledDataset, TimestampFormat};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::pipeline::{warm_up_stream, PipelineConfig, PointVerdict};
use crate::series::AnomalyLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MatchMode {
    /// A hit needs the predicted sign to equal the true sign.
    #[default]
    SignStrict,
    /// Any predicted anomaly on any true anomaly is a hit.
    AnyAnomaly,
}

/// Combined counts. Under `SignStrict` a prediction with the wrong sign is
/// both a false positive (predicted class) and a false negative (true
/// class), so `tp + fp + fn + tn == n + sign_mismatch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub sign_mismatch: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn - self.sign_mismatch
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;
    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
            sign_mismatch: self.sign_mismatch + o.sign_mismatch,
        }
    }
}

pub fn confusion(pred: &[AnomalyLabel], truth: &[AnomalyLabel], mode: MatchMode) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p.is_anomaly(), t.is_anomaly()) {
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (true, true) => {
                if mode == MatchMode::AnyAnomaly || p == t {
                    c.tp += 1;
                } else {
                    c.fp += 1;
                    c.fn_ += 1;
                    c.sign_mismatch += 1;
                }
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any of the ratios was 0/0.
    pub degenerate: bool,
}

pub fn f1(c: &ConfusionCounts) -> F1Score {
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let mut degenerate = p.is_none() || r.is_none();
    let (precision, recall) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        degenerate = true;
        0.0
    };
    F1Score {
        precision,
        recall,
        f1,
        degenerate,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedConfig {
    pub name: String,
    pub config: PipelineConfig,
}

impl NamedConfig {
    pub fn new(name: impl Into<String>, config: PipelineConfig) -> Self {
        NamedConfig {
            name: name.into(),
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BenchmarkOptions {
    pub mode: MatchMode,
    pub execution: Execution,
    pub keep_verdicts: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub config: String,
    pub counts: Option<ConfusionCounts>,
    pub score: Option<F1Score>,
    pub error: Option<String>,
    #[serde(skip)]
    pub verdicts: Vec<PointVerdict>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub datasets: Vec<String>,
    pub configs: Vec<String>,
    pub mode: MatchMode,
    /// Row-major: one row per config, one column per dataset.
    pub cells: Vec<Cell>,
}

/// Warm up on the train split, stream validation and test, score test only.
pub fn evaluate_cell(
    dataset: &LabeledDataset,
    cfg: &PipelineConfig,
    mode: MatchMode,
) -> Result<(ConfusionCounts, Vec<PointVerdict>)> {
    let splits = dataset.splits;
    let (train, _) = dataset.range(splits.train)?;
    let mut state = warm_up_stream(&dataset.kpi_id, &train, cfg)?;
    let live = dataset.series.slice_time(splits.val.0, splits.test.1)?;
    let verdicts = state.run(&live).map_err(|e| e.in_stream(&dataset.kpi_id))?;
    let test: Vec<PointVerdict> = verdicts
        .into_iter()
        .filter(|v| v.timestamp >= splits.test.0)
        .collect();
    let (_, truth) = dataset.range(splits.test)?;
    let pred: Vec<AnomalyLabel> = test.iter().map(|v| v.label).collect();
    Ok((confusion(&pred, truth, mode)?, test))
}

pub fn benchmark(datasets: &[LabeledDataset], configs: &[NamedConfig], opts: BenchmarkOptions) -> BenchmarkReport {
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..datasets.len()).map(move |d| (c, d)))
        .collect();
    let cells = par::map(&jobs, opts.execution, |&(c, d)| {
        let (ds, cfg) = (&datasets[d], &configs[c]);
        let mut cell = Cell {
            dataset: ds.kpi_id.clone(),
            config: cfg.name.clone(),
            counts: None,
            score: None,
            error: None,
            verdicts: Vec::new(),
        };
        match evaluate_cell(ds, &cfg.config, opts.mode) {
            Ok((counts, verdicts)) => {
                cell.score = Some(f1(&counts));
                cell.counts = Some(counts);
                if opts.keep_verdicts {
                    cell.verdicts = verdicts;
                }
            }
            Err(e) => cell.error = Some(e.to_string()),
        }
        cell
    });
    BenchmarkReport {
        datasets: datasets.iter().map(|d| d.kpi_id.clone()).collect(),
        configs: configs.iter().map(|c| c.name.clone()).collect(),
        mode: opts.mode,
        cells,
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"))
}

impl BenchmarkReport {
    pub fn cell(&self, config: &str, dataset: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.config == config && c.dataset == dataset)
    }

    /// Mean F1 over the config's successful cells, optionally restricted to
    /// a subset of datasets.
    pub fn mean_f1(&self, config: &str, datasets: Option<&[&str]>) -> Option<f64> {
        let scores: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.config == config)
            .filter(|c| datasets.is_none_or(|ds| ds.contains(&c.dataset.as_str())))
            .filter_map(|c| c.score.map(|s| s.f1))
            .collect();
        (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,config,precision,recall,f1\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.dataset,
                c.config,
                fmt_metric(c.score.map(|s| s.precision)),
                fmt_metric(c.score.map(|s| s.recall)),
                fmt_metric(c.score.map(|s| s.f1)),
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// F1 grid with one row per config and a trailing mean column.
    pub fn to_text(&self) -> String {
        let name_w = self.configs.iter().map(|c| c.len()).max().unwrap_or(6).max(6);
        let col_w = self.datasets.iter().map(|d| d.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<name_w$}", "config");
        for d in &self.datasets {
            let _ = write!(out, "  {d:>col_w$}");
        }
        let _ = writeln!(out, "  {:>col_w$}", "mean");
        for cfg in &self.configs {
            let _ = write!(out, "{cfg:<name_w$}");
            for d in &self.datasets {
                let v = self.cell(cfg, d).and_then(|c| c.score.map(|s| s.f1));
                let _ = write!(out, "  {:>col_w$}", fmt_metric(v));
            }
            let _ = writeln!(out, "  {:>col_w$}", fmt_metric(self.mean_f1(cfg, None)));
        }
        out
    }

    /// Writes `report.csv`, `report.json`, `report.txt` and, when verdicts
    /// were kept, one verdict dump per cell under `verdicts/`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        fs::write(dir.join("report.txt"), self.to_text())?;
        let kept: Vec<&Cell> = self.cells.iter().filter(|c| !c.verdicts.is_empty()).collect();
        if !kept.is_empty() {
            let vdir = dir.join("verdicts");
            fs::create_dir_all(&vdir)?;
            for c in kept {
                let path = vdir.join(format!("{}__{}.csv", c.dataset, c.config));
                write_verdicts(&c.verdicts, &mut BufWriter::new(File::create(path)?), TimestampFormat::Iso8601)?;
            }
        }
        Ok(())
    }
}

/// `timestamp,value,residual,score,label,left_thr,right_thr,drift`
pub fn write_verdicts(verdicts: &[PointVerdict], w: &mut impl Write, format: TimestampFormat) -> Result<()> {
    writeln!(w, "timestamp,value,residual,score,label,left_thr,right_thr,drift")?;
    for v in verdicts {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            format_timestamp(v.timestamp, format),
            v.value,
            v.residual,
            v.score,
            v.label.code(),
            v.thresholds.0,
            v.thresholds.1,
            v.drift_event.as_ref().map_or("", |d| d.short_name()),
        )?;
    }
    w.flush()?;
    Ok(())
}
