//! `probeweight`: probe-and-allocate training on biased synthetic data.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use probeweight_cli::bench::{self, ExperimentConfig, HarnessObserver};
use probeweight_cli::checkpoint::{save_classifier, save_weight_net};
use probeweight_cli::clock::InstantClock;
use probeweight_cli::curve_file;
use probeweight_cli::dataset_io::{load_dataset, save_dataset, sidecar_path, DatasetSidecar};
use probeweight_cli::reports::emit_reports;
use probeweight_cli::rundir::{Method, RunConfig, RunDir};
use probeweight_core::biasgen::{
    apply_imbalance, apply_label_noise, generate_blobs, BiasConfig, BlobGeometry, NoiseMode,
};
use probeweight_core::curvenet::{init_curvenet, CurveNetConfig};
use probeweight_core::meta::{allocate_train, train_ce, AllocConfig, LrSchedule};
use probeweight_core::nn::Mlp;
use probeweight_core::probe::{
    normalize_curves, probe_train, CyclicalSchedule, ProbeConfig, RecordMode,
};
use probeweight_core::rng::{seeded, Stream};
use probeweight_core::weightnet::{TransientNet, WeightNet};

#[derive(Parser)]
#[command(
    name = "probeweight",
    about = "Probe-and-allocate training: loss-curve probing plus meta-learned sample weighting",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a biased train set plus clean meta-pool and test set
    Gen(GenArgs),
    /// Probing stage: train under a cyclical LR and record loss curves
    Probe(ProbeArgs),
    /// Allocating stage: meta-learn sample weights while training
    Allocate(AllocateArgs),
    /// Experiment harness
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseModeArg {
    Uniform,
    Flip2,
}

impl From<NoiseModeArg> for NoiseMode {
    fn from(v: NoiseModeArg) -> Self {
        match v {
            NoiseModeArg::Uniform => NoiseMode::Uniform,
            NoiseModeArg::Flip2 => NoiseMode::Flip2,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for train.csv, meta_pool.csv, test.csv (+ sidecars)
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Clean training pool per class, before imbalance thins it
    #[arg(long, default_value_t = 2000)]
    per_class: usize,
    #[arg(long, default_value_t = 50)]
    meta_pool_per_class: usize,
    #[arg(long, default_value_t = 500)]
    test_per_class: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    std_dev: f64,
    #[arg(long, default_value_t = 1.0)]
    imbalance_factor: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    #[arg(long, value_enum, default_value_t = NoiseModeArg::Uniform)]
    noise_mode: NoiseModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ProbeArgs {
    /// Training dataset CSV (with .json sidecar)
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    cycle_len: usize,
    #[arg(long, default_value_t = 0.1)]
    max_lr: f64,
    #[arg(long, default_value_t = 0.001)]
    base_lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output curve file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Classifier hidden widths
    #[arg(long, value_delimiter = ',', default_values_t = vec![64, 32])]
    hidden: Vec<usize>,
    /// Record an end-of-epoch evaluation pass instead of visit-time losses
    #[arg(long)]
    eval_pass: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightNetArg {
    Curvenet,
    Transient,
    Constant,
}

#[derive(Args)]
struct AllocateArgs {
    /// Training dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// Meta dataset CSV
    #[arg(long)]
    meta: PathBuf,
    /// Probe curve file (required for the curvenet weight net)
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Skip-layer count SL for the meta gradient
    #[arg(long, default_value_t = 0)]
    sl: usize,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output run directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long)]
    meta_batch_size: Option<usize>,
    /// Initial classifier learning rate
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Epochs at which the classifier LR decays
    #[arg(long, value_delimiter = ',', default_values_t = vec![30, 45])]
    milestones: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    decay_factor: f64,
    /// Weight-net Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    beta: f64,
    /// Epoch at which the weight net freezes (default: first milestone)
    #[arg(long)]
    freeze_at: Option<usize>,
    /// Leading probe epochs dropped before normalization
    #[arg(long, default_value_t = 5)]
    prefix_drop: usize,
    /// Also divide normalized curves by the per-(class, epoch) std
    #[arg(long)]
    std_normalize: bool,
    #[arg(long, value_delimiter = ',', default_values_t = vec![64, 32])]
    hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = WeightNetArg::Curvenet)]
    weight_net: WeightNetArg,
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    #[arg(long, default_value_t = 128)]
    encoder_hidden: usize,
    #[arg(long, default_value_t = 100)]
    head_hidden: usize,
    #[arg(long, default_value_t = 100)]
    transient_hidden: usize,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run (or resume) a full experiment grid
    Run {
        /// Experiment config JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's out_dir)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit report CSVs from a completed run directory
    Report { run_dir: PathBuf },
    /// Verify and print the MA rows of a summary CSV
    Ma { summary: PathBuf },
    /// Print a ready-to-edit experiment config template
    Template,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(args) => cmd_gen(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Allocate(args) => cmd_allocate(args),
        Command::Bench { command } => match command {
            BenchCommand::Run { config, out } => cmd_bench_run(config, out),
            BenchCommand::Report { run_dir } => cmd_bench_report(run_dir),
            BenchCommand::Ma { summary } => cmd_bench_ma(summary),
            BenchCommand::Template => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&ExperimentConfig::template())?
                );
                Ok(())
            }
        },
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let geometry = BlobGeometry {
        separation: args.separation,
        std_dev: args.std_dev,
        centers: None,
    };
    let total = args.per_class + args.meta_pool_per_class + args.test_per_class;
    let pool = generate_blobs(args.classes, total, args.dim, &geometry, args.seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let (train_clean, rest) = pool
        .split_per_class(args.per_class)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let (meta_pool, test) = rest
        .split_per_class(args.meta_pool_per_class)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let noise_mode: NoiseMode = args.noise_mode.into();
    let thinned = apply_imbalance(&train_clean, args.imbalance_factor, args.seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let biased = apply_label_noise(&thinned, args.noise_rate, noise_mode, args.seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let bias = BiasConfig {
        imbalance_factor: args.imbalance_factor,
        noise_rate: args.noise_rate,
        noise_mode,
        seed: args.seed,
    };
    let sidecar = |bias: Option<BiasConfig>| DatasetSidecar {
        num_classes: args.classes,
        feature_dim: args.dim,
        seed: args.seed,
        bias,
    };
    save_dataset(
        &biased,
        &sidecar(Some(bias)),
        &args.out_dir.join("train.csv"),
    )?;
    save_dataset(
        &meta_pool,
        &sidecar(None),
        &args.out_dir.join("meta_pool.csv"),
    )?;
    save_dataset(&test, &sidecar(None), &args.out_dir.join("test.csv"))?;
    println!(
        "wrote {} train / {} meta-pool / {} test samples to {}",
        biased.len(),
        meta_pool.len(),
        test.len(),
        args.out_dir.display()
    );
    println!("train class counts: {:?}", biased.class_counts());
    Ok(())
}

fn cmd_probe(args: ProbeArgs) -> Result<()> {
    let (dataset, sidecar) = load_dataset(&args.data)?;
    let view = dataset.training_view();
    let config = ProbeConfig {
        epochs: args.epochs,
        prefix_drop: 0, // truncation happens at allocate time
        batch_size: args.batch_size,
        schedule: CyclicalSchedule {
            base_lr: args.base_lr,
            max_lr: args.max_lr,
            cycle_len: args.cycle_len,
        },
        seed: args.seed,
        std_normalize: false,
        record_mode: if args.eval_pass {
            RecordMode::EvalPass
        } else {
            RecordMode::AtVisit
        },
    };
    let mut dims = vec![sidecar.feature_dim];
    dims.extend_from_slice(&args.hidden);
    dims.push(sidecar.num_classes);
    let mut rng = seeded(args.seed, Stream::ClassifierInit);
    let classifier = Mlp::init(&dims, &mut rng).map_err(|e| anyhow::anyhow!("{e}"))?;

    let start = std::time::Instant::now();
    let curves = probe_train(&view, classifier, &config).map_err(|e| anyhow::anyhow!("{e}"))?;
    curve_file::save(&curves, &args.out)?;
    println!(
        "probed {} samples x {} epochs in {:.1}s -> {}",
        curves.num_samples(),
        curves.epochs(),
        start.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn cmd_allocate(args: AllocateArgs) -> Result<()> {
    let (train, train_sidecar) = load_dataset(&args.data)?;
    let (meta, _) = load_dataset(&args.meta)?;
    let train_view = train.training_view();
    let meta_view = meta.training_view();
    let k = train_sidecar.num_classes;

    let alloc_config = AllocConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        meta_batch_size: args.meta_batch_size,
        classifier_lr: LrSchedule {
            initial: args.lr,
            milestones: args.milestones.clone(),
            factor: args.decay_factor,
        },
        weight_net_lr: args.beta,
        skip_layers: args.sl,
        freeze_at: args.freeze_at,
        seed: args.seed,
    };

    // Curves: loaded, truncated, and class-normalized for the curvenet path.
    let (normalized, probe_config, curvenet_config) = match args.weight_net {
        WeightNetArg::Curvenet => {
            let curves_path = args
                .curves
                .as_ref()
                .context("--curves is required for the curvenet weight net")?;
            let raw = curve_file::load(curves_path)?;
            let normalized = normalize_curves(&raw, k, args.prefix_drop, args.std_normalize)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let curvenet_config = CurveNetConfig {
                curve_len: normalized.curve_len(),
                num_classes: k,
                embed_dim: args.embed_dim,
                encoder_hidden: args.encoder_hidden,
                head_hidden: args.head_hidden,
            };
            // Record the probe-side normalization knobs for reports.
            let probe_config = ProbeConfig {
                epochs: raw.epochs(),
                prefix_drop: args.prefix_drop,
                std_normalize: args.std_normalize,
                ..ProbeConfig::default()
            };
            (Some(normalized), Some(probe_config), Some(curvenet_config))
        }
        _ => (None, None, None),
    };

    let weight_net = match args.weight_net {
        WeightNetArg::Curvenet => WeightNet::Curve(
            init_curvenet(curvenet_config.as_ref().unwrap(), args.seed)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        ),
        WeightNetArg::Transient => WeightNet::Transient(
            TransientNet::init(args.transient_hidden, args.seed)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        ),
        WeightNetArg::Constant => WeightNet::Constant(1.0),
    };
    let method = match args.weight_net {
        WeightNetArg::Curvenet => Method::Curvenet,
        WeightNetArg::Transient => Method::MwnetTransient,
        WeightNetArg::Constant => Method::Ce,
    };

    let mut dims = vec![train_sidecar.feature_dim];
    dims.extend_from_slice(&args.hidden);
    dims.push(k);
    let mut rng = seeded(args.seed, Stream::ClassifierInit);
    let classifier = Mlp::init(&dims, &mut rng).map_err(|e| anyhow::anyhow!("{e}"))?;

    let run = RunDir::create(&args.out)?;
    // Copy inputs into the run dir so reports can derive everything from it.
    std::fs::copy(&args.data, run.path("train.csv"))?;
    std::fs::copy(sidecar_path(&args.data), run.path("train.json"))?;
    std::fs::copy(&args.meta, run.path("meta.csv"))?;
    std::fs::copy(sidecar_path(&args.meta), run.path("meta.json"))?;
    if let (WeightNetArg::Curvenet, Some(curves_path)) = (args.weight_net, args.curves.as_ref()) {
        std::fs::copy(curves_path, run.path("curves.pacv"))?;
    }
    let mut observer = HarnessObserver {
        test_view: None,
        train_dataset: &train,
        train_view: &train_view,
        curves: normalized.as_ref(),
        final_epoch: args.epochs.saturating_sub(1),
        every_epoch: false,
    };

    let start = std::time::Instant::now();
    let (classifier, weight_net, history) = match &weight_net {
        WeightNet::Constant(_) => {
            let (net, history) = train_ce(&train_view, classifier, &alloc_config, &mut observer)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            (net, weight_net, history)
        }
        _ => {
            let mut clock = InstantClock::new();
            let outcome = allocate_train(
                &train_view,
                &meta_view,
                normalized.as_ref(),
                classifier,
                weight_net,
                &alloc_config,
                &mut clock,
                &mut observer,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            (outcome.classifier, outcome.weight_net, outcome.history)
        }
    };

    run.write_config(&RunConfig {
        method,
        seed: args.seed,
        num_classes: k,
        feature_dim: train_sidecar.feature_dim,
        classifier_hidden: args.hidden.clone(),
        bias: train_sidecar.bias,
        probe: probe_config,
        alloc: alloc_config.clone(),
        curvenet: curvenet_config,
        transient_hidden: matches!(args.weight_net, WeightNetArg::Transient)
            .then_some(args.transient_hidden),
    })?;
    save_classifier(
        &run.path("classifier.ckpt"),
        &classifier,
        args.seed,
        args.epochs as u64,
    )?;
    save_weight_net(
        &run.path("curvenet.ckpt"),
        &weight_net,
        args.seed,
        history.total_theta_steps(),
    )?;
    run.write_history(&history, k)?;

    let last = history.epochs.last().expect("at least one epoch ran");
    println!(
        "allocated {} epochs in {:.1}s ({} theta steps) -> {}",
        args.epochs,
        start.elapsed().as_secs_f64(),
        history.total_theta_steps(),
        args.out.display()
    );
    println!(
        "final train loss {:.4}, meta loss {}",
        last.train_loss,
        last.meta_loss
            .map(|m| format!("{m:.4}"))
            .unwrap_or_else(|| "-".into())
    );
    Ok(())
}

fn cmd_bench_run(config_path: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let json = std::fs::read_to_string(&config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let config: ExperimentConfig = serde_json::from_str(&json)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from(&config.out_dir));
    let report = bench::run_grid(&config, &out_dir)?;
    println!(
        "grid complete: {} ran, {} skipped; summary at {}",
        report.ran,
        report.skipped,
        report.summary_path.display()
    );
    for (method, ma) in bench::verify_ma(&report.summary_path)? {
        println!("MA[{method}] = {ma:.4}");
    }
    Ok(())
}

fn cmd_bench_report(run_dir: PathBuf) -> Result<()> {
    let written = emit_reports(&run_dir)?;
    if written.is_empty() {
        bail!("no reports could be derived from {}", run_dir.display());
    }
    for name in written {
        println!("wrote {}", run_dir.join("reports").join(name).display());
    }
    Ok(())
}

fn cmd_bench_ma(summary: PathBuf) -> Result<()> {
    for (method, ma) in bench::verify_ma(&summary)? {
        println!("MA[{method}] = {ma:.4}");
    }
    println!("stored MA rows match the recomputation exactly");
    Ok(())
}
