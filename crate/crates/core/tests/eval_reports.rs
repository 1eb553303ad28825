use ath_core::dataio::{generate_synthetic, Family, SyntheticSpec};
use ath_core::eval::{benchmark, BenchmarkOptions, NamedConfig};
use ath_core::{Execution, PipelineConfig};

fn small_suite() -> Vec<ath_core::dataio::LabeledDataset> {
    [(Family::Seasonal, 3u64), (Family::Stochastic, 4)]
        .iter()
        .enumerate()
        .map(|(k, &(f, seed))| generate_synthetic(&format!("kpi_{k}"), &SyntheticSpec::new(f, seed)).unwrap())
        .collect()
}

#[test]
fn failing_cell_is_na_and_grid_completes() {
    let suite = small_suite();
    let too_long = PipelineConfig {
        forecaster_window: 60 * 86_400,
        ..PipelineConfig::default()
    };
    let configs = [
        NamedConfig::new("default", PipelineConfig::default()),
        NamedConfig::new("too_long", too_long),
    ];
    let rep = benchmark(&suite, &configs, BenchmarkOptions::default());
    assert_eq!(rep.cells.len(), 4);
    assert!(rep.cells.iter().filter(|c| c.config == "too_long").all(|c| c.error.is_some()));
    assert!(rep.cells.iter().filter(|c| c.config == "default").all(|c| c.score.is_some()));
    let csv = rep.to_csv();
    assert!(csv.starts_with("dataset,config,precision,recall,f1\n"));
    assert!(csv.lines().any(|l| l.starts_with("kpi_0,too_long,NA,NA,NA")));
    assert_eq!(rep.mean_f1("too_long", None), None);
    for c in rep.cells.iter().filter_map(|c| c.score) {
        assert!((0.0..=1.0).contains(&c.f1));
    }
}

#[test]
fn parallel_and_sequential_reports_agree() {
    let suite = small_suite();
    let configs = [NamedConfig::new("default", PipelineConfig::default())];
    let run = |execution| {
        benchmark(
            &suite,
            &configs,
            BenchmarkOptions {
                execution,
                ..BenchmarkOptions::default()
            },
        )
    };
    let (a, b) = (run(Execution::Parallel), run(Execution::Sequential));
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn report_trio_and_verdicts_written() {
    let suite = small_suite();
    let configs = [NamedConfig::new("default", PipelineConfig::default())];
    let rep = benchmark(
        &suite,
        &configs,
        BenchmarkOptions {
            keep_verdicts: true,
            ..BenchmarkOptions::default()
        },
    );
    let dir = tempfile::tempdir().unwrap();
    rep.write_to_dir(dir.path()).unwrap();
    for f in ["report.csv", "report.json", "report.txt", "verdicts/kpi_0__default.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["cells"].as_array().unwrap().len(), 2);
    let verdicts = std::fs::read_to_string(dir.path().join("verdicts/kpi_0__default.csv")).unwrap();
    assert!(verdicts.starts_with("timestamp,value,residual,score,label,left_thr,right_thr,drift\n"));
}
