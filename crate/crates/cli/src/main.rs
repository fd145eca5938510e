//! `shsd`: grid contingency detection pipeline driver.

mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use shsd_core::detector::{compare_baseline, detect_stream, DetectConfig, ScenarioStream};
use shsd_core::grid::network::load_network_file;
use shsd_core::grid::params::load_params_file;
use shsd_core::grid::SystemBuilder;
use shsd_core::scenario::{
    default_features, default_input, generate_dataset, ContingencyCatalog, Dataset,
};
use shsd_core::shs::{
    expected_responses, momi_check, observability, save_library, InputSignal, MomiVerdict,
    RationalInput,
};
use shsd_core::tsformer::gradcheck::{check_config, grad_check, DEFAULT_STEP, DEFAULT_TOL};
use shsd_core::tsformer::{
    evaluate, train, Checkpoint, ConfusionMatrix, ModelConfig, ModelParams, TrainConfig,
};
use shsd_core::{Error, Result};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "shsd",
    version,
    about = "Model a distribution grid as a switched linear system, generate labeled \
             contingency windows, train a transformer classifier, and run online detection.",
    long_about = None
)]
struct Cli {
    /// Structured run configuration (TOML). Flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker cap. The pipeline is fully sequential, so any value yields
    /// bit-identical results; the flag exists for interface stability.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Network description file (.net).
    #[arg(long, global = true)]
    network: Option<PathBuf>,

    /// Machine/inverter parameter file (TOML).
    #[arg(long, global = true)]
    params: Option<PathBuf>,

    /// Dataset file (.shsd).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    /// Model checkpoint file (.shsm).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Directory for artifacts (manifests, metrics, histories).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct GenOverrides {
    /// Scenario base seed.
    #[arg(long)]
    gen_seed: Option<u64>,
    /// Windows per class, e.g. 200,200,200.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Excitation amplitude on the p_ref channel.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Also export the dataset as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct TrainOverrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Training seed (shuffling and dropout).
    #[arg(long)]
    train_seed: Option<u64>,
    /// Parameter initialization seed.
    #[arg(long)]
    init_seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct DetectOverrides {
    /// Number of online cycles.
    #[arg(long)]
    cycles: Option<usize>,
    /// Online stream seed.
    #[arg(long)]
    detect_seed: Option<u64>,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Build the mode library (base + every admissible contingency).
    BuildModel,
    /// Generate the labeled contingency window dataset.
    GenData(GenOverrides),
    /// Train the classifier on a generated dataset.
    Train(TrainOverrides),
    /// Evaluate a checkpoint on its dataset's held-out split.
    Eval {
        /// Proceed even if the dataset fingerprint differs from the one
        /// recorded in the checkpoint.
        #[arg(long)]
        allow_fingerprint_mismatch: bool,
    },
    /// Run online detection over a fresh random switching sequence.
    Detect(DetectOverrides),
    /// Report the observability matrix rank of the base mode.
    Observability,
    /// Check a rational input against the mode library.
    MomiCheck {
        /// Numerator coefficients, descending powers of s.
        #[arg(long, value_delimiter = ',')]
        num: Option<Vec<f64>>,
        /// Denominator coefficients, descending powers of s.
        #[arg(long, value_delimiter = ',')]
        den: Option<Vec<f64>>,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck,
    /// Compare the classifier against the residual baseline online.
    Baseline(DetectOverrides),
}

#[derive(Serialize)]
struct Metrics {
    command: String,
    config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_library_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_max_rel_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_cycle_latency_ms: Option<Vec<f64>>,
}

impl Metrics {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.into(),
            config_hash: cfg.hash(),
            accuracy: None,
            confusion: None,
            min_library_gap: None,
            grad_max_rel_err: None,
            per_cycle_latency_ms: None,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    config: &'a RunConfig,
    seeds: ManifestSeeds,
    threads: usize,
    version: &'a str,
    /// Seconds since the epoch; the only field allowed to differ between
    /// reruns of the same configuration.
    timestamp: u64,
}

#[derive(Serialize)]
struct ManifestSeeds {
    gen: u64,
    split: u64,
    model_init: u64,
    train: u64,
    detect: u64,
}

fn write_run_records(
    command: &str,
    cfg: &RunConfig,
    threads: usize,
    metrics: &Metrics,
) -> Result<()> {
    std::fs::create_dir_all(&cfg.paths.out_dir)?;
    let manifest = Manifest {
        command,
        config_hash: cfg.hash(),
        config: cfg,
        seeds: ManifestSeeds {
            gen: cfg.gen.base_seed,
            split: cfg.split.seed,
            model_init: cfg.model.init_seed,
            train: cfg.train.seed,
            detect: cfg.detect.base_seed,
        },
        threads,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mpath = cfg.paths.out_dir.join(format!("{command}-manifest.json"));
    std::fs::write(
        &mpath,
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    let path = cfg.paths.out_dir.join(format!("{command}-metrics.json"));
    std::fs::write(
        &path,
        serde_json::to_string_pretty(metrics).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    Ok(())
}

fn load_catalog(cfg: &RunConfig) -> Result<ContingencyCatalog> {
    let network = load_network_file(&cfg.paths.network)?;
    let params = load_params_file(&cfg.paths.params)?;
    ContingencyCatalog::build(SystemBuilder::new(network, params)?)
}

fn default_rational(cfg: &RunConfig, catalog: &ContingencyCatalog) -> Result<InputSignal> {
    default_input(&catalog.base.model, cfg.gen.amplitude)
}

fn detect_config(cfg: &RunConfig, catalog: &ContingencyCatalog) -> Result<DetectConfig> {
    Ok(DetectConfig {
        n_cycles: cfg.detect.n_cycles,
        base_seed: cfg.detect.base_seed,
        schedule: cfg.schedule(),
        noise: cfg.noise(),
        input: default_rational(cfg, catalog)?,
        features: default_features(&catalog.base.model),
    })
}

fn check_feature_match(checkpoint: &Checkpoint, n_features: usize) -> Result<()> {
    if checkpoint.params.config.n_features != n_features {
        return Err(Error::Dimension(format!(
            "checkpoint expects {} features but the network yields {n_features}",
            checkpoint.params.config.n_features
        )));
    }
    Ok(())
}

fn cmd_build_model(cfg: &RunConfig, threads: usize) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let library = catalog.library()?;
    let dir = cfg.paths.out_dir.join("modes");
    save_library(&dir, &library)?;

    let input = default_rational(cfg, &catalog)?;
    let x0 = DVector::zeros(catalog.base.model.n());
    let responses = expected_responses(&library, &input, &x0, &cfg.schedule())?;
    let gap = responses.min_cross_class_gap(&library);

    let mut metrics = Metrics::new("build-model", cfg);
    metrics.min_library_gap = Some(gap);
    write_run_records("build-model", cfg, threads, &metrics)?;
    println!(
        "wrote {} modes to {} (min response gap {gap:.3e})",
        library.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_gen_data(cfg: &RunConfig, threads: usize, over: &GenOverrides) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let gen_config = shsd_core::scenario::GenConfig {
        counts: cfg.gen.counts,
        schedule: cfg.schedule(),
        noise: cfg.noise(),
        input: default_rational(cfg, &catalog)?,
        features: default_features(&catalog.base.model),
        base_seed: cfg.gen.base_seed,
    };
    let (mut dataset, _records) = generate_dataset(&catalog, &gen_config)?;
    dataset.split(cfg.split.train_frac, cfg.split.seed)?;
    if let Some(parent) = cfg.paths.dataset.parent() {
        std::fs::create_dir_all(parent)?;
    }
    dataset.write_file(&cfg.paths.dataset)?;
    if let Some(csv) = &over.csv {
        std::fs::write(csv, dataset.to_csv())?;
    }

    let metrics = Metrics::new("gen-data", cfg);
    write_run_records("gen-data", cfg, threads, &metrics)?;
    println!(
        "wrote {} windows ({} train / {} test) to {}",
        dataset.windows.len(),
        dataset.train_idx.len(),
        dataset.test_idx.len(),
        cfg.paths.dataset.display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig, threads: usize) -> Result<()> {
    let dataset = Dataset::read_file(&cfg.paths.dataset)?;
    let model_config = ModelConfig {
        layers: cfg.model.layers,
        heads: cfg.model.heads,
        d_model: cfg.model.d_model,
        d_ff: cfg.model.d_ff,
        seq_len: dataset.s,
        n_features: dataset.m,
        n_classes: dataset.n_classes,
        dropout: cfg.model.dropout,
    };
    let mut params = ModelParams::init(model_config, cfg.model.init_seed)?;
    let train_config = TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.learning_rate,
        seed: cfg.train.seed,
        ..TrainConfig::default()
    };

    std::fs::create_dir_all(&cfg.paths.out_dir)?;
    let history_path = cfg.paths.out_dir.join("history.jsonl");
    let mut history_lines = Vec::new();
    let mut progress = |s: &shsd_core::tsformer::EpochStats| {
        println!(
            "epoch {:3}  loss {:.4}  train_acc {:.3}  test_acc {:.3}",
            s.epoch, s.train_loss, s.train_acc, s.test_acc
        );
        history_lines.push(serde_json::to_string(s).expect("stats serialize"));
    };
    let history = train(&mut params, &dataset, &train_config, Some(&mut progress))?;
    std::fs::write(&history_path, history_lines.join("\n") + "\n")?;

    let checkpoint = Checkpoint::new(
        params,
        dataset.fingerprint(),
        dataset.norm_mean.clone(),
        dataset.norm_std.clone(),
    )?;
    if let Some(parent) = cfg.paths.checkpoint.parent() {
        std::fs::create_dir_all(parent)?;
    }
    checkpoint.write_file(&cfg.paths.checkpoint)?;

    let mut metrics = Metrics::new("train", cfg);
    metrics.accuracy = history.last().map(|s| s.test_acc);
    write_run_records("train", cfg, threads, &metrics)?;
    println!(
        "wrote checkpoint {} (final test accuracy {:.3})",
        cfg.paths.checkpoint.display(),
        history.last().map(|s| s.test_acc).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, threads: usize, allow_mismatch: bool) -> Result<()> {
    let dataset = Dataset::read_file(&cfg.paths.dataset)?;
    let checkpoint = Checkpoint::read_file(&cfg.paths.checkpoint)?;
    if checkpoint.dataset_fingerprint != dataset.fingerprint() {
        if !allow_mismatch {
            return Err(Error::Fingerprint(
                "checkpoint was trained on a different dataset (fingerprint mismatch); \
                 pass --allow-fingerprint-mismatch to evaluate anyway"
                    .into(),
            ));
        }
        eprintln!("warning: dataset fingerprint differs from the checkpoint's");
    }
    let cm = evaluate(&checkpoint.params, &dataset, &dataset.test_idx)?;
    report_confusion("eval", cfg, threads, &cm)
}

fn report_confusion(
    command: &str,
    cfg: &RunConfig,
    threads: usize,
    cm: &ConfusionMatrix,
) -> Result<()> {
    let mut metrics = Metrics::new(command, cfg);
    metrics.accuracy = Some(cm.accuracy());
    metrics.confusion = Some(cm.counts.clone());
    write_run_records(command, cfg, threads, &metrics)?;
    println!("accuracy {:.4}", cm.accuracy());
    for (i, row) in cm.counts.iter().enumerate() {
        println!("class {i}: {row:?}");
    }
    Ok(())
}

fn cmd_detect(cfg: &RunConfig, threads: usize) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let checkpoint = Checkpoint::read_file(&cfg.paths.checkpoint)?;
    let config = detect_config(cfg, &catalog)?;
    check_feature_match(&checkpoint, config.features.len())?;
    let stream = ScenarioStream::random(&catalog, &config)?;
    let sequence = detect_stream(&catalog, &checkpoint, &config, &stream)?;

    std::fs::create_dir_all(&cfg.paths.out_dir)?;
    std::fs::write(cfg.paths.out_dir.join("sequence.csv"), sequence.to_csv())?;
    std::fs::write(cfg.paths.out_dir.join("sequence.json"), sequence.to_json()?)?;

    let mut metrics = Metrics::new("detect", cfg);
    metrics.accuracy = Some(sequence.accuracy());
    metrics.per_cycle_latency_ms =
        Some(sequence.cycles.iter().map(|c| c.latency_ms).collect());
    write_run_records("detect", cfg, threads, &metrics)?;
    println!(
        "{} cycles: accuracy {:.4}, max latency {:.3} ms",
        sequence.cycles.len(),
        sequence.accuracy(),
        sequence.max_latency_ms()
    );
    Ok(())
}

fn cmd_observability(cfg: &RunConfig, threads: usize) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let (obs, rank) = observability(&catalog.base);
    let metrics = Metrics::new("observability", cfg);
    write_run_records("observability", cfg, threads, &metrics)?;
    println!(
        "observability matrix {}x{}, numerical rank {rank} of {} states",
        obs.nrows(),
        obs.ncols(),
        catalog.base.model.n()
    );
    Ok(())
}

fn cmd_momi(cfg: &RunConfig, threads: usize, num: Option<Vec<f64>>, den: Option<Vec<f64>>) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let library = catalog.library()?;
    let rational = match (num, den) {
        (Some(n), Some(d)) => RationalInput::new(n, d, 0)?,
        (None, None) => match default_rational(cfg, &catalog)? {
            InputSignal::Rational(r) => r,
            other => {
                return Err(Error::Validation(format!(
                    "default input {other:?} is not rational"
                )))
            }
        },
        _ => {
            return Err(Error::Validation(
                "--num and --den must be given together".into(),
            ))
        }
    };
    let verdict = momi_check(&rational, &library)?;
    let metrics = Metrics::new("momi-check", cfg);
    write_run_records("momi-check", cfg, threads, &metrics)?;
    match &verdict {
        MomiVerdict::Accept { witness_root } => {
            println!("accept: denominator root {witness_root} is shared with no mode");
            Ok(())
        }
        MomiVerdict::Reject {
            offending_mode,
            shared_root,
        } => {
            println!("reject: every denominator root is a mode eigenvalue (e.g. {shared_root} of mode {offending_mode})");
            std::process::exit(3);
        }
    }
}

fn cmd_gradcheck(cfg: &RunConfig, threads: usize) -> Result<()> {
    use rand::Rng;
    let model_config = check_config();
    let mut params = ModelParams::init(model_config, 12)?;
    let mut rng = shsd_core::rng::stream_rng(13, 0);
    let x = ndarray::Array2::from_shape_fn(
        (2 * model_config.seq_len, model_config.n_features),
        |_| rng.gen_range(-1.0..1.0),
    );
    let report = grad_check(&mut params, &x, &[0, 2], DEFAULT_STEP, None)?;

    let mut metrics = Metrics::new("gradcheck", cfg);
    metrics.grad_max_rel_err = Some(report.max_rel_err);
    write_run_records("gradcheck", cfg, threads, &metrics)?;
    println!(
        "{} parameters, max relative error {:.3e} (tolerance {:.1e})",
        report.n_params, report.max_rel_err, DEFAULT_TOL
    );
    for (group, err) in &report.per_group {
        println!("  {group}: {err:.3e}");
    }
    if report.passes(DEFAULT_TOL) {
        println!("gradcheck: PASS");
        Ok(())
    } else {
        println!("gradcheck: FAIL");
        std::process::exit(2);
    }
}

fn cmd_baseline(cfg: &RunConfig, threads: usize) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let checkpoint = Checkpoint::read_file(&cfg.paths.checkpoint)?;
    let config = detect_config(cfg, &catalog)?;
    check_feature_match(&checkpoint, config.features.len())?;
    let stream = ScenarioStream::random(&catalog, &config)?;
    let comparison = compare_baseline(&catalog, &checkpoint, &config, &stream)?;

    std::fs::create_dir_all(&cfg.paths.out_dir)?;
    std::fs::write(
        cfg.paths.out_dir.join("baseline.json"),
        serde_json::to_string_pretty(&comparison).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    let mut metrics = Metrics::new("baseline", cfg);
    metrics.accuracy = Some(comparison.transformer.accuracy());
    metrics.confusion = Some(comparison.transformer.counts.clone());
    write_run_records("baseline", cfg, threads, &metrics)?;
    println!(
        "{} cycles: transformer {:.4}, residual baseline {:.4}, agreement {:.4}",
        comparison.n_cycles,
        comparison.transformer.accuracy(),
        comparison.baseline.accuracy(),
        comparison.agreement
    );
    Ok(())
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.network {
        cfg.paths.network = p.clone();
    }
    if let Some(p) = &cli.params {
        cfg.paths.params = p.clone();
    }
    if let Some(p) = &cli.dataset {
        cfg.paths.dataset = p.clone();
    }
    if let Some(p) = &cli.checkpoint {
        cfg.paths.checkpoint = p.clone();
    }
    if let Some(p) = &cli.out_dir {
        cfg.paths.out_dir = p.clone();
    }
    match &cli.command {
        Command::GenData(over) => {
            if let Some(seed) = over.gen_seed {
                cfg.gen.base_seed = seed;
            }
            if let Some(counts) = &over.counts {
                let [a, b, c] = counts.as_slice() else {
                    return Err(Error::Validation(format!(
                        "--counts takes exactly 3 comma-separated values, got {}",
                        counts.len()
                    )));
                };
                cfg.gen.counts = [*a, *b, *c];
            }
            if let Some(a) = over.amplitude {
                cfg.gen.amplitude = a;
            }
        }
        Command::Train(over) => {
            if let Some(v) = over.epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = over.batch_size {
                cfg.train.batch_size = v;
            }
            if let Some(v) = over.learning_rate {
                cfg.train.learning_rate = v;
            }
            if let Some(v) = over.train_seed {
                cfg.train.seed = v;
            }
            if let Some(v) = over.init_seed {
                cfg.model.init_seed = v;
            }
        }
        Command::Detect(over) | Command::Baseline(over) => {
            if let Some(v) = over.cycles {
                cfg.detect.n_cycles = v;
            }
            if let Some(v) = over.detect_seed {
                cfg.detect.base_seed = v;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Validation("--threads must be at least 1".into()));
    }
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::BuildModel => cmd_build_model(&cfg, cli.threads),
        Command::GenData(over) => cmd_gen_data(&cfg, cli.threads, over),
        Command::Train(_) => cmd_train(&cfg, cli.threads),
        Command::Eval {
            allow_fingerprint_mismatch,
        } => cmd_eval(&cfg, cli.threads, *allow_fingerprint_mismatch),
        Command::Detect(_) => cmd_detect(&cfg, cli.threads),
        Command::Observability => cmd_observability(&cfg, cli.threads),
        Command::MomiCheck { num, den } => {
            cmd_momi(&cfg, cli.threads, num.clone(), den.clone())
        }
        Command::Gradcheck => cmd_gradcheck(&cfg, cli.threads),
        Command::Baseline(_) => cmd_baseline(&cfg, cli.threads),
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Parse(_) => "parse",
        Error::Validation(_) => "validation",
        Error::Dimension(_) => "dimension",
        Error::Numeric(_) => "numeric",
        Error::Islanded { .. } => "islanded",
        Error::Format(_) => "format",
        Error::Fingerprint(_) => "fingerprint",
        Error::Io(_) => "io",
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        let payload = serde_json::json!({
            "error": { "kind": error_kind(&e), "message": e.to_string() }
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
