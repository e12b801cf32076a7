//! End-to-end tests of the `probeweight` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn probeweight() -> Command {
    Command::new(env!("CARGO_BIN_EXE_probeweight"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn gen_probe_allocate_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let curves = dir.path().join("curves.pacv");
    let run = dir.path().join("run");

    run_ok(probeweight().args([
        "gen",
        "--out-dir",
        data.to_str().unwrap(),
        "--classes",
        "3",
        "--per-class",
        "80",
        "--meta-pool-per-class",
        "10",
        "--test-per-class",
        "20",
        "--imbalance-factor",
        "5",
        "--noise-rate",
        "0.3",
        "--seed",
        "2",
    ]));
    for name in ["train.csv", "train.json", "meta_pool.csv", "test.csv"] {
        assert!(data.join(name).exists(), "{name} missing");
    }

    let probe_args = |out: &Path| {
        vec![
            "probe".to_string(),
            "--data".into(),
            data.join("train.csv").to_str().unwrap().into(),
            "--epochs".into(),
            "8".into(),
            "--cycle-len".into(),
            "4".into(),
            "--seed".into(),
            "2".into(),
            "--hidden".into(),
            "16,8".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    run_ok(probeweight().args(probe_args(&curves)));

    // Same seed, same data: the curve file reproduces byte for byte.
    let curves2 = dir.path().join("curves2.pacv");
    run_ok(probeweight().args(probe_args(&curves2)));
    assert_eq!(fs::read(&curves).unwrap(), fs::read(&curves2).unwrap());

    run_ok(probeweight().args([
        "allocate",
        "--data",
        data.join("train.csv").to_str().unwrap(),
        "--meta",
        data.join("meta_pool.csv").to_str().unwrap(),
        "--curves",
        curves.to_str().unwrap(),
        "--sl",
        "1",
        "--epochs",
        "6",
        "--seed",
        "2",
        "--milestones",
        "3,5",
        "--prefix-drop",
        "2",
        "--hidden",
        "16,8",
        "--embed-dim",
        "8",
        "--encoder-hidden",
        "16",
        "--head-hidden",
        "12",
        "--out",
        run.to_str().unwrap(),
    ]));
    for name in [
        "config.json",
        "history.csv",
        "classifier.ckpt",
        "curvenet.ckpt",
    ] {
        assert!(run.join(name).exists(), "{name} missing from run dir");
    }

    let stdout = run_ok(probeweight().args(["bench", "report", run.to_str().unwrap()]));
    assert!(stdout.contains("weights_by_group.csv"));
    assert!(run.join("reports/weights_by_group.csv").exists());
    assert!(run.join("reports/timing.csv").exists());
    // No test set in a standalone allocate run, so no confusion report.
    assert!(!run.join("reports/confusion.csv").exists());
}

#[test]
fn bench_template_round_trips_and_grid_runs() {
    let dir = tempfile::tempdir().unwrap();
    let template = run_ok(probeweight().args(["bench", "template"]));
    let mut config: serde_json::Value = serde_json::from_str(&template).unwrap();

    // Shrink the template into a fast grid.
    config["dataset"]["train_per_class"] = 40.into();
    config["dataset"]["meta_pool_per_class"] = 8.into();
    config["dataset"]["test_per_class"] = 10.into();
    config["imbalance_factors"] = serde_json::json!([2.0]);
    config["noise_rates"] = serde_json::json!([0.2]);
    config["methods"] = serde_json::json!(["ce", "curvenet"]);
    config["seeds"] = serde_json::json!([1]);
    config["probe"]["epochs"] = 6.into();
    config["probe"]["prefix_drop"] = 2.into();
    config["probe"]["schedule"]["cycle_len"] = 3.into();
    config["alloc"]["epochs"] = 4.into();
    config["alloc"]["classifier_lr"]["milestones"] = serde_json::json!([2, 3]);
    config["alloc"]["freeze_at"] = 2.into();
    config["classifier_hidden"] = serde_json::json!([8]);
    config["curvenet"] = serde_json::json!({"embed_dim": 6, "encoder_hidden": 8, "head_hidden": 6});
    config["meta_per_class"] = 4.into();
    let out = dir.path().join("grid");
    config["out_dir"] = out.to_str().unwrap().into();

    let config_path = dir.path().join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let stdout =
        run_ok(probeweight().args(["bench", "run", "--config", config_path.to_str().unwrap()]));
    assert!(stdout.contains("2 ran, 0 skipped"));
    assert!(stdout.contains("MA[curvenet]"));

    let summary = out.join("summary.csv");
    let stdout = run_ok(probeweight().args(["bench", "ma", summary.to_str().unwrap()]));
    assert!(stdout.contains("match the recomputation exactly"));

    // Resuming skips every cell.
    let stdout =
        run_ok(probeweight().args(["bench", "run", "--config", config_path.to_str().unwrap()]));
    assert!(stdout.contains("0 ran, 2 skipped"));
}
