use std::fs;
use std::path::Path;

use exohydro::cli::run;

fn exo(args: &[&str]) -> i32 {
    let mut v = vec!["exohydro"];
    v.extend_from_slice(args);
    run(v)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, catchments: &str, days: &str) {
    assert_eq!(exo(&["--output-dir", s(dir), "synth-data", "--catchments", catchments, "--days", days, "--seed", "7"]), 0);
}

#[test]
fn synth_data_writes_counted_rows_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "8", "400");
    synth(&b, "8", "400");
    let dynamic = fs::read_to_string(a.join("dynamic.csv")).unwrap();
    assert_eq!(dynamic.lines().count(), 1 + 8 * 400);
    assert_eq!(fs::read_to_string(a.join("static.csv")).unwrap().lines().count(), 1 + 8);
    for f in ["dynamic.csv", "static.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn short_series_are_written_but_train_reports_window_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "4", "10");
    assert!(data.join("dynamic.csv").is_file());
    let run_dir = tmp.path().join("run");
    let code = exo(&["--output-dir", s(&run_dir), "train", "--config", s(&data.join("run_config.toml")), "--epochs", "1"]);
    assert_eq!(code, 2);
    assert!(!run_dir.join("checkpoint.ckpt").exists());
}

#[test]
fn training_twice_is_bitwise_identical_and_echo_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "5", "90");
    let cfg = data.join("run_config.toml");
    let runs: Vec<_> = ["r1", "r2"].iter().map(|r| tmp.path().join(r)).collect();
    for r in &runs {
        let args = ["--output-dir", s(r), "--threads", "1", "train", "--config", s(&cfg), "--epochs", "3", "--batch-size", "16", "--hidden", "8"];
        assert_eq!(exo(&args), 0);
    }
    let r3 = tmp.path().join("r3");
    assert_eq!(exo(&["--output-dir", s(&r3), "train", "--config", s(&runs[0].join("run_config.toml"))]), 0);
    for f in ["training_log.csv", "checkpoint.ckpt", "checkpoint_final.ckpt", "checkpoint_best.ckpt", "split.csv", "normalization.txt"] {
        let first = fs::read(runs[0].join(f)).unwrap();
        assert_eq!(first, fs::read(runs[1].join(f)).unwrap(), "{f} differs between runs");
        assert_eq!(first, fs::read(r3.join(f)).unwrap(), "{f} differs when re-run from the echoed config");
    }

    assert_eq!(exo(&["--output-dir", s(&runs[0]), "evaluate", "--config", s(&runs[0].join("run_config.toml"))]), 0);
    let metrics = fs::read_to_string(runs[0].join("metrics.csv")).unwrap();
    assert!(metrics.contains("LSTM-multivariate"));
    assert!(runs[0].join("forecasts.csv").is_file());
}

#[test]
fn paper_preset_without_statics_fails_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "3", "60");
    let out = tmp.path().join("run");
    let code = exo(&["--output-dir", s(&out), "train", "--preset", "paper", "--dynamic", s(&data.join("dynamic.csv"))]);
    assert_eq!(code, 1);
    assert!(!out.join("training_log.csv").exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(exo(&["frobnicate"]), 1);
    assert_eq!(exo(&["train", "--preset", "fast", "--dynamic", "nowhere.csv"]), 1);
    assert_eq!(exo(&["grad-check", "--seed", "minus-one"]), 1);
}

#[test]
fn grad_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(exo(&["--output-dir", s(tmp.path()), "grad-check", "--seed", "3"]), 0);
}

#[test]
fn compare_truth_against_itself_gives_zero_row() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "3", "40");
    let out = tmp.path().join("cmp");
    let truth = data.join("dynamic.csv");
    let fc = format!("truth={}", s(&truth));
    assert_eq!(exo(&["--output-dir", s(&out), "compare", "--truth", s(&truth), "--forecasts", &fc]), 0);
    let report = exohydro::eval::MetricsReport::from_csv(&fs::read_to_string(out.join("comparison.csv")).unwrap()).unwrap();
    assert!(report.row("truth").unwrap().values.iter().all(|v| *v == Some(0.0)));
    assert!(out.join("comparison.svg").is_file());

    let missing = tmp.path().join("missing.csv");
    fs::write(&missing, "catchment_id,date,variable,value\nsyn00,1989-10-02,q,1.0\n").unwrap();
    let code = exo(&["--output-dir", s(&out), "compare", "--truth", s(&truth), "--forecasts", s(&missing)]);
    assert_eq!(code, 2);
}

#[test]
fn ablate_small_grid_writes_report_and_figure() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "5", "80");
    let out = tmp.path().join("abl");
    let cfg = data.join("run_config.toml");
    let args = [
        "--output-dir", s(&out), "--threads", "2", "ablate", "--config", s(&cfg),
        "--grid", "just_ts,annual_static", "--epochs", "2", "--hidden", "6", "--batch-size", "32",
    ];
    assert_eq!(exo(&args), 0);
    let report = exohydro::eval::MetricsReport::from_csv(&fs::read_to_string(out.join("ablation.csv")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 2);
    let svg = fs::read_to_string(out.join("ablation.svg")).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 12);
}

#[test]
fn plot_commands_write_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "30");
    let out = tmp.path().join("plots");
    let truth = data.join("dynamic.csv");
    let fc = format!("echo={}", s(&truth));
    let args = ["--output-dir", s(&out), "plot", "series", "--truth", s(&truth), "--forecasts", &fc, "--catchment", "syn00"];
    assert_eq!(exo(&args), 0);
    let svg = fs::read_to_string(out.join("series.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let cmp = tmp.path().join("cmp");
    let fc = format!("truth={}", s(&truth));
    assert_eq!(exo(&["--output-dir", s(&cmp), "compare", "--truth", s(&truth), "--forecasts", &fc]), 0);
    let report = cmp.join("comparison.csv");
    assert_eq!(exo(&["--output-dir", s(&out), "plot", "bars", "--report", s(&report)]), 0);
    assert!(out.join("rmse_bars.svg").is_file());
    assert_eq!(exo(&["--output-dir", s(&out), "plot", "series", "--truth", s(&truth), "--catchment", "nope"]), 2);
}
