//! Grid-harness and report-emission integration tests.

use std::fs;
use std::path::Path;

use probeweight_cli::bench::{
    run_cell, run_grid, verify_ma, Cell, CurveNetWidths, DatasetRecipe, ExperimentConfig,
    MetaStrategy,
};
use probeweight_cli::curve_file;
use probeweight_cli::dataset_io::load_dataset;
use probeweight_cli::reports::emit_reports;
use probeweight_cli::rundir::Method;
use probeweight_core::biasgen::{BlobGeometry, NoiseMode};
use probeweight_core::meta::{AllocConfig, LrSchedule};
use probeweight_core::probe::{CyclicalSchedule, ProbeConfig};

fn tiny_config(out_dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetRecipe {
            num_classes: 3,
            train_per_class: 60,
            meta_pool_per_class: 10,
            test_per_class: 20,
            feature_dim: 2,
            geometry: BlobGeometry::default(),
        },
        imbalance_factors: vec![1.0, 5.0],
        noise_rates: vec![0.0, 0.3],
        noise_mode: NoiseMode::Uniform,
        methods: vec![Method::Ce, Method::Curvenet],
        seeds: vec![3],
        probe: ProbeConfig {
            epochs: 8,
            prefix_drop: 2,
            batch_size: 16,
            schedule: CyclicalSchedule {
                base_lr: 0.01,
                max_lr: 0.1,
                cycle_len: 4,
            },
            seed: 0,
            std_normalize: false,
            record_mode: probeweight_core::probe::RecordMode::AtVisit,
        },
        alloc: AllocConfig {
            epochs: 6,
            batch_size: 16,
            meta_batch_size: None,
            classifier_lr: LrSchedule {
                initial: 0.1,
                milestones: vec![3, 5],
                factor: 0.1,
            },
            weight_net_lr: 1e-3,
            skip_layers: 0,
            freeze_at: None,
            seed: 0,
        },
        classifier_hidden: vec![16, 8],
        curvenet: CurveNetWidths {
            embed_dim: 8,
            encoder_hidden: 16,
            head_hidden: 12,
        },
        transient_hidden: 20,
        meta_per_class: 5,
        meta_strategy: MetaStrategy::HeldOutClean,
        track_epoch_weights: false,
        out_dir: out_dir.to_string_lossy().into_owned(),
    }
}

#[test]
fn grid_runs_resume_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let config = tiny_config(&out);

    let first = run_grid(&config, &out).unwrap();
    assert_eq!(first.ran, 8); // 2 IF x 2 p x 1 seed x 2 methods
    assert_eq!(first.skipped, 0);

    // summary rows: 8 runs + one MA row per method (+ header).
    let summary = fs::read_to_string(&first.summary_path).unwrap();
    let rows = summary.lines().count();
    assert_eq!(rows, 1 + 8 + 2);

    // The MA rows match an exact recomputation from the stored counts.
    let mas = verify_ma(&first.summary_path).unwrap();
    assert_eq!(mas.len(), 2);

    // MA is the plain mean of the four per-cell accuracies.
    let mut ce_accs = Vec::new();
    for line in summary.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] == "run" && fields[4] == "ce" {
            ce_accs.push(fields[5].parse::<f64>().unwrap());
        }
    }
    assert_eq!(ce_accs.len(), 4);
    let expect = ce_accs.iter().sum::<f64>() / 4.0;
    let stored = mas.iter().find(|(m, _)| m == "ce").unwrap().1;
    assert!((stored - expect).abs() < 1e-15);

    // Rerun: nothing trains again, summary is regenerated byte-identically.
    let before = fs::read(&first.summary_path).unwrap();
    let second = run_grid(&config, &out).unwrap();
    assert_eq!(second.ran, 0);
    assert_eq!(second.skipped, 8);
    assert_eq!(fs::read(&second.summary_path).unwrap(), before);
}

#[test]
fn low_probe_loss_strategy_selects_meta_samples_from_the_train_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut config = tiny_config(dir.path());
    config.meta_strategy = MetaStrategy::LowProbeLoss;
    let cell = Cell {
        imbalance_factor: 5.0,
        noise_rate: 0.3,
        seed: 13,
        method: Method::Curvenet,
    };
    run_cell(&config, &cell, &out).unwrap();

    let (meta, _) = load_dataset(&out.join("meta.csv")).unwrap();
    let (train, _) = load_dataset(&out.join("train.csv")).unwrap();
    assert_eq!(meta.class_counts(), vec![5; 3].as_slice());
    let train_ids: std::collections::BTreeSet<u64> = train.sample_ids().collect();
    assert!(meta.sample_ids().all(|id| train_ids.contains(&id)));

    // Picked samples really are the low-loss ones: per class, every selected
    // mean (over the truncated curve) is <= every unselected mean.
    let curves = curve_file::load(&out.join("curves.pacv")).unwrap();
    let means = curves
        .mean_loss_per_sample(config.probe.prefix_drop)
        .unwrap();
    let meta_ids: std::collections::BTreeSet<u64> = meta.sample_ids().collect();
    for class in 0..3 {
        let (selected, rest): (Vec<f64>, Vec<f64>) = train
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.observed_label == class)
            .map(|(i, s)| (means[i], meta_ids.contains(&s.sample_id)))
            .fold(
                (Vec::new(), Vec::new()),
                |(mut sel, mut rest), (m, is_sel)| {
                    if is_sel {
                        sel.push(m);
                    } else {
                        rest.push(m);
                    }
                    (sel, rest)
                },
            );
        let max_selected = selected.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_rest = rest.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            max_selected <= min_rest,
            "class {class}: {max_selected} > {min_rest}"
        );
    }
}

#[test]
fn resuming_with_a_different_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let mut config = tiny_config(&out);
    config.imbalance_factors = vec![1.0];
    config.noise_rates = vec![0.0];
    config.methods = vec![Method::Ce];
    run_grid(&config, &out).unwrap();

    config.noise_rates = vec![0.1];
    let err = run_grid(&config, &out).unwrap_err().to_string();
    assert!(err.contains("refusing to resume"), "{err}");
}

#[test]
fn frozen_at_zero_curvenet_reports_all_group_means_at_half() {
    // freeze_at = 0 means Θ never updates, so every weight stays sigmoid(0).
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut config = tiny_config(dir.path());
    config.alloc.freeze_at = Some(0);
    let cell = Cell {
        imbalance_factor: 5.0,
        noise_rate: 0.3,
        seed: 9,
        method: Method::Curvenet,
    };
    run_cell(&config, &cell, &out).unwrap();
    emit_reports(&out).unwrap();

    let csv = fs::read_to_string(out.join("reports/weights_by_group.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let count: usize = fields[2].parse().unwrap();
        if count > 0 {
            assert_eq!(fields[3], "0.5", "group mean should be exactly 0.5: {line}");
            assert_eq!(fields[4], "0", "group std should be exactly 0: {line}");
        }
    }
}

#[test]
fn reports_match_independent_recomputations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = tiny_config(dir.path());
    let cell = Cell {
        imbalance_factor: 5.0,
        noise_rate: 0.3,
        seed: 11,
        method: Method::Curvenet,
    };
    run_cell(&config, &cell, &out).unwrap();
    let written = emit_reports(&out).unwrap();

    // Reports are pure functions of the artifacts: a second emission over
    // the same run dir reproduces every file byte for byte.
    let before: Vec<Vec<u8>> = written
        .iter()
        .map(|name| fs::read(out.join("reports").join(name)).unwrap())
        .collect();
    emit_reports(&out).unwrap();
    for (name, bytes) in written.iter().zip(&before) {
        assert_eq!(
            &fs::read(out.join("reports").join(name)).unwrap(),
            bytes,
            "{name} not regenerated identically"
        );
    }

    // The test set is clean and balanced.
    let (test, _) = load_dataset(&out.join("test.csv")).unwrap();
    assert!(test.samples().iter().all(|s| !s.is_noisy));
    assert!(test
        .class_counts()
        .iter()
        .all(|&n| n == test.class_counts()[0]));
    let confusion = fs::read_to_string(out.join("reports/confusion.csv")).unwrap();
    for (class, line) in confusion.lines().skip(1).enumerate() {
        let fields: Vec<usize> = line
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(fields.iter().sum::<usize>(), test.class_counts()[class]);
    }

    // curve_groups.csv against a brute-force group-by over the raw matrix.
    let curves = curve_file::load(&out.join("curves.pacv")).unwrap();
    let (train, _) = load_dataset(&out.join("train.csv")).unwrap();
    let groups = fs::read_to_string(out.join("reports/curve_groups.csv")).unwrap();
    let k = train.num_classes();
    for line in groups.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let epoch: usize = fields[0].parse().unwrap();
        let (class, noisy) = match fields[1] {
            "clean-head" => (0, false),
            "noisy-head" => (0, true),
            "clean-tail" => (k - 1, false),
            "noisy-tail" => (k - 1, true),
            other => panic!("unknown group {other}"),
        };
        let mean: f64 = fields[2].parse().unwrap();
        let variance: f64 = fields[3].parse().unwrap();

        // Independent two-pass aggregation.
        let values: Vec<f64> = train
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.observed_label == class && s.is_noisy == noisy)
            .map(|(i, _)| curves.row(i)[epoch] as f64)
            .collect();
        assert!(!values.is_empty());
        let m = values.iter().fold(0.0, |acc, v| acc + v) / values.len() as f64;
        let v = values.iter().fold(0.0, |acc, x| acc + (x - m) * (x - m)) / values.len() as f64;
        assert!((m - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{line}");
        assert!(
            (v - variance).abs() <= 1e-12 * variance.abs().max(1.0),
            "{line}"
        );
    }
}
