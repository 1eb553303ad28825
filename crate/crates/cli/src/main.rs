//! `ath` command-line front end. Exit status: 0 success, 1 configuration
//! error, 2 data error.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ath_core::dataio::{
    default_suite_specs, generate_synthetic, read_csv, write_csv, Family, SyntheticSpec, TailMix, TimestampFormat,
};
use ath_core::eval::{benchmark, write_verdicts, BenchmarkOptions, MatchMode, NamedConfig};
use ath_core::{apply_ath, warm_up_stream, AnomalyLabel, AthConfig, Axis, Execution, PipelineConfig, ScoreSeries};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Parser)]
#[command(name = "ath", version, about = "Adaptive-threshold KPI anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Warm up on the leading forecaster window, then stream the rest.
    Detect {
        #[arg(long)]
        input: PathBuf,
        /// key = value pipeline configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Verdict CSV destination.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the verdict CSV to standard output.
        #[arg(long)]
        emit_verdicts: bool,
        #[arg(long)]
        epoch_timestamps: bool,
    },
    /// Score labeled KPI files against one or more configurations.
    Evaluate {
        /// Labeled CSV files; comma-separated or repeated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        input: Vec<PathBuf>,
        /// Configuration files, one grid row each (named by file stem).
        #[arg(long)]
        config: Vec<PathBuf>,
        /// Directory for report.csv, report.json and report.txt.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::SignStrict)]
        mode: Mode,
        /// Keep per-point verdicts under <report>/verdicts.
        #[arg(long)]
        keep_verdicts: bool,
        /// Run grid cells on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Write a synthetic labeled KPI (or the default ten-KPI suite).
    Generate {
        #[arg(long, value_enum, default_value_t = FamilyArg::Seasonal)]
        family: FamilyArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output CSV (single KPI).
        #[arg(long, required_unless_present = "suite")]
        out: Option<PathBuf>,
        /// Write kpi_A.csv .. kpi_J.csv into this directory instead.
        #[arg(long, conflicts_with = "out")]
        suite: Option<PathBuf>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        magnitude: Option<f64>,
        #[arg(long)]
        days: Option<i64>,
        #[arg(long)]
        interval: Option<i64>,
        /// Series start, epoch seconds.
        #[arg(long)]
        start: Option<i64>,
        #[arg(long, value_enum)]
        tails: Option<TailsArg>,
        #[arg(long)]
        epoch_timestamps: bool,
    },
    /// Time threshold selection on synthetic score windows.
    BenchPerf {
        /// Window sizes; comma-separated or repeated.
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [100_000usize, 1_000_000])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    SignStrict,
    AnyAnomaly,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Seasonal,
    Stochastic,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailsArg {
    Left,
    Right,
    Both,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<ath_core::Error> for CliError {
    fn from(e: ath_core::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn io_data(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config::parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn ts_format(epoch: bool) -> TimestampFormat {
    if epoch {
        TimestampFormat::Epoch
    } else {
        TimestampFormat::Iso8601
    }
}

fn detect(
    input: &Path,
    config: Option<&Path>,
    output: Option<&Path>,
    emit: bool,
    format: TimestampFormat,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let ds = read_csv(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let start = ds.series.start();
    let split = (start + cfg.forecaster_window).min(ds.series.end());
    let history = ds.series.slice_time(start, split)?;
    let mut state = warm_up_stream(&ds.kpi_id, &history, &cfg)?;
    let verdicts = if split < ds.series.end() {
        let live = ds.series.slice_time(split, ds.series.end())?;
        state.run(&live).map_err(|e| e.in_stream(&ds.kpi_id))?
    } else {
        Vec::new()
    };
    if let Some(path) = output {
        let mut w = BufWriter::new(File::create(path).map_err(io_data(path))?);
        write_verdicts(&verdicts, &mut w, format)?;
    }
    if emit {
        write_verdicts(&verdicts, &mut io::stdout().lock(), format)?;
    }
    let count = |l: AnomalyLabel| verdicts.iter().filter(|v| v.label == l).count();
    let drifts = verdicts.iter().filter(|v| v.drift_event.is_some()).count();
    let (left, right) = state.thresholds();
    eprintln!(
        "{}: {} points streamed, {} left / {} right anomalies, {} drift events, final thresholds ({left:.4}, {right:.4})",
        ds.kpi_id,
        verdicts.len(),
        count(AnomalyLabel::Left),
        count(AnomalyLabel::Right),
        drifts
    );
    Ok(())
}

fn evaluate(
    inputs: &[PathBuf],
    configs: &[PathBuf],
    report: Option<&Path>,
    mode: Mode,
    keep_verdicts: bool,
    sequential: bool,
) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Config("no input datasets given".into()));
    }
    let named: Vec<NamedConfig> = if configs.is_empty() {
        vec![NamedConfig::new("default", PipelineConfig::default())]
    } else {
        configs
            .iter()
            .map(|p| {
                let name = p.file_stem().map_or("config".into(), |s| s.to_string_lossy().into_owned());
                load_config(Some(p)).map(|c| NamedConfig::new(name, c))
            })
            .collect::<Result<_, _>>()?
    };
    let datasets = inputs
        .iter()
        .map(|p| read_csv(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = BenchmarkOptions {
        mode: match mode {
            Mode::SignStrict => MatchMode::SignStrict,
            Mode::AnyAnomaly => MatchMode::AnyAnomaly,
        },
        execution: if sequential { Execution::Sequential } else { Execution::Parallel },
        keep_verdicts: keep_verdicts && report.is_some(),
    };
    let rep = benchmark(&datasets, &named, opts);
    print!("{}", rep.to_text());
    for c in rep.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("{} / {}: {}", c.dataset, c.config, c.error.as_deref().unwrap_or_default());
    }
    if let Some(dir) = report {
        rep.write_to_dir(dir)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generate(
    family: FamilyArg,
    seed: u64,
    out: Option<&Path>,
    suite: Option<&Path>,
    rate: Option<f64>,
    magnitude: Option<f64>,
    days: Option<i64>,
    interval: Option<i64>,
    start: Option<i64>,
    tails: Option<TailsArg>,
    format: TimestampFormat,
) -> Result<(), CliError> {
    let tweak = |mut spec: SyntheticSpec| {
        if let Some(r) = rate {
            spec.anomaly_rate = r;
        }
        if let Some(m) = magnitude {
            spec.anomaly_magnitude = m;
        }
        if let Some(d) = days {
            spec.span = d * 86_400;
        }
        if let Some(i) = interval {
            spec.interval = i;
        }
        if let Some(s) = start {
            spec.start = s;
        }
        if let Some(t) = tails {
            spec.tails = match t {
                TailsArg::Left => TailMix::Left,
                TailsArg::Right => TailMix::Right,
                TailsArg::Both => TailMix::Both,
            };
        }
        spec
    };
    let jobs: Vec<(String, SyntheticSpec, PathBuf)> = match (suite, out) {
        (Some(dir), _) => {
            fs::create_dir_all(dir).map_err(io_data(dir))?;
            default_suite_specs(seed)
                .into_iter()
                .map(|(id, spec)| {
                    let path = dir.join(format!("{id}.csv"));
                    (id, tweak(spec), path)
                })
                .collect()
        }
        (None, Some(path)) => {
            let family = match family {
                FamilyArg::Seasonal => Family::Seasonal,
                FamilyArg::Stochastic => Family::Stochastic,
            };
            let id = path.file_stem().map_or("kpi".into(), |s| s.to_string_lossy().into_owned());
            vec![(id, tweak(SyntheticSpec::new(family, seed)), path.to_path_buf())]
        }
        (None, None) => return Err(CliError::Config("either --out or --suite is required".into())),
    };
    for (id, spec, path) in jobs {
        let ds = generate_synthetic(&id, &spec)?;
        write_csv(&ds, &path, format)?;
        eprintln!("{}: {} points, {} anomalies", path.display(), ds.series.len(), ds.anomaly_count());
    }
    Ok(())
}

fn bench_perf(sizes: &[usize], repeat: usize, seed: u64) -> Result<(), CliError> {
    if sizes.is_empty() || sizes.contains(&0) || repeat == 0 {
        return Err(CliError::Config("--n values and --repeat must be positive".into()));
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let cfg = AthConfig::right();
    let mut out = io::stdout().lock();
    let mut previous: Option<f64> = None;
    let _ = writeln!(out, "n,best_seconds,ratio_to_previous");
    for &n in sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
        let scores = ScoreSeries::new(
            Axis::new(0, 900)?,
            (0..n).map(|_| unit.sample(&mut rng)).collect(),
        )?;
        let best = (0..repeat)
            .map(|_| {
                let t0 = Instant::now();
                std::hint::black_box(apply_ath(&scores, &cfg)).map(|_| t0.elapsed().as_secs_f64())
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let ratio = previous.map_or("".to_string(), |p| format!("{:.2}", best / p));
        let _ = writeln!(out, "{n},{best:.6},{ratio}");
        previous = Some(best);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Detect {
            input,
            config,
            output,
            emit_verdicts,
            epoch_timestamps,
        } => detect(
            &input,
            config.as_deref(),
            output.as_deref(),
            emit_verdicts,
            ts_format(epoch_timestamps),
        ),
        Command::Evaluate {
            input,
            config,
            report,
            mode,
            keep_verdicts,
            sequential,
        } => evaluate(&input, &config, report.as_deref(), mode, keep_verdicts, sequential),
        Command::Generate {
            family,
            seed,
            out,
            suite,
            rate,
            magnitude,
            days,
            interval,
            start,
            tails,
            epoch_timestamps,
        } => generate(
            family,
            seed,
            out.as_deref(),
            suite.as_deref(),
            rate,
            magnitude,
            days,
            interval,
            start,
            tails,
            ts_format(epoch_timestamps),
        ),
        Command::BenchPerf { n, repeat, seed } => bench_perf(&n, repeat, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ath: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
