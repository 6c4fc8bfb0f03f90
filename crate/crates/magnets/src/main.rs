use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magnets_core::data::DatasetKind;
use magnets_core::model::NoiseKind;
use magnets_core::train::TrainConfig;

use magnets::formats::{self, FormatError, ModelCheckpoint};
use magnets::pipeline::{self, MagnetsSettings, ModelKind, RunSpec};
use magnets::report;
use magnets::repro::{self, ReproConfig};

/// Interpretable time-series regression by learning to mask and aggregate.
#[derive(Parser)]
#[command(name = "magnets", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset pair (train/test files).
    Gen(GenArgs),
    /// Train a model on a generated dataset pair.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split of a dataset pair.
    Eval(EvalArgs),
    /// Export the full explanation of one test sample.
    Explain(ExplainArgs),
    /// Run the whole desk-scale benchmark and print a comparison table.
    Repro(ReproArgs),
    /// Execute a run described by a JSON run file.
    Run(RunFileArgs),
}

fn default_out() -> PathBuf {
    std::env::var_os("MAGNETS_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Args)]
struct GenArgs {
    /// univariate | bivariate | trivariate1 | trivariate2
    dataset: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Fraction of the full-scale sample counts (50000 train / 10000 test).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 128)]
    t: usize,
    /// Output directory (env MAGNETS_OUT overrides the default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// magnets | cnn | mean | ols | ridge | lasso
    model: String,
    /// Dataset path stem; reads <stem>_train.mgts and <stem>_test.mgts.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    lspars: f64,
    #[arg(long, default_value_t = 0.0)]
    lortho: f64,
    #[arg(long, default_value_t = 10)]
    masks: usize,
    #[arg(long, default_value_t = 3)]
    concepts: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// gumbel | logistic
    #[arg(long, default_value = "logistic")]
    noise: String,
    /// Encoder widths, e.g. 32,64,128.
    #[arg(long, default_value = "32,64,128")]
    widths: String,
    /// Penalty weight for ridge/lasso.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// weighted | union
    #[arg(long, default_value = "weighted")]
    mask_pool: String,
    #[arg(long, default_value_t = 50)]
    ig_steps: usize,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset path stem; evaluates on <stem>_test.mgts.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "weighted")]
    mask_pool: String,
    #[arg(long, default_value_t = 50)]
    ig_steps: usize,
    /// Write integrated-gradients attributions of every test sample here
    /// (CNN checkpoints only).
    #[arg(long)]
    export_attr: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Test-split sample index.
    #[arg(long, default_value_t = 0)]
    sample: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated training seeds.
    #[arg(long, default_value = "101,202,303")]
    seeds: String,
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value = "4,8,16")]
    widths: String,
    #[arg(long, default_value_t = 50)]
    ig_steps: usize,
    /// Also run the unregularized configuration on every dataset.
    #[arg(long, default_value_t = false)]
    full: bool,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct RunFileArgs {
    /// JSON file holding a run description (see `runspec.json` of any run).
    spec: PathBuf,
    /// Dataset path stem.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    json: bool,
}

fn parse_widths(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad widths '{s}': {e}"))?;
    if parts.len() != 3 || parts.iter().any(|w| *w == 0) {
        return Err(format!("widths '{s}' must be three positive integers"));
    }
    Ok([parts[0], parts[1], parts[2]])
}

enum CliError {
    BadInput(String),
    Diverged(usize),
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        if let FormatError::Model(magnets_core::Error::Diverged { epoch }) = &e {
            return CliError::Diverged(*epoch);
        }
        CliError::BadInput(e.to_string())
    }
}

impl From<magnets_core::Error> for CliError {
    fn from(e: magnets_core::Error) -> Self {
        if let magnets_core::Error::Diverged { epoch } = e {
            return CliError::Diverged(epoch);
        }
        CliError::BadInput(e.to_string())
    }
}

impl From<String> for CliError {
    fn from(s: String) -> Self {
        CliError::BadInput(s)
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Repro(args) => cmd_repro(args),
        Command::Run(args) => cmd_run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::BadInput(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Diverged(epoch)) => {
            eprintln!("error: training diverged at epoch {epoch}; last good checkpoint retained");
            ExitCode::from(3)
        }
    }
}

fn cmd_gen(args: GenArgs) -> CliResult {
    let kind = DatasetKind::parse(&args.dataset)
        .ok_or_else(|| format!("unknown dataset '{}'", args.dataset))?;
    let out = args.out.unwrap_or_else(default_out);
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let (train, test) = pipeline::generate_pair(kind, args.seed, args.scale, args.t)?;
    let train_path = out.join(format!("{}_train.mgts", kind.name()));
    let test_path = out.join(format!("{}_test.mgts", kind.name()));
    formats::write_dataset(&train, &train_path)?;
    formats::write_dataset(&test, &test_path)?;
    let y_mean = train.y.iter().sum::<f64>() / train.n.max(1) as f64;
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "dataset": kind.name(), "seed": args.seed,
                "n_train": train.n, "n_test": test.n,
                "t": train.t, "channels": train.c,
                "train_y_mean": y_mean,
                "train_path": train_path, "test_path": test_path,
            })
        );
    } else {
        println!(
            "{}: {} train / {} test samples, c={}, t={}, train target mean {:.3}",
            kind.name(),
            train.n,
            test.n,
            train.c,
            train.t,
            y_mean
        );
        println!("wrote {} and {}", train_path.display(), test_path.display());
    }
    Ok(())
}

fn build_spec(args: &TrainArgs) -> Result<RunSpec, CliError> {
    let model = ModelKind::parse(&args.model)
        .ok_or_else(|| format!("unknown model '{}'", args.model))?;
    let noise = match args.noise.as_str() {
        "gumbel" => NoiseKind::Gumbel,
        "logistic" => NoiseKind::Logistic,
        other => return Err(format!("unknown noise kind '{other}'").into()),
    };
    let mut train = TrainConfig::new(args.seed);
    train.epochs = args.epochs;
    train.batch_size = args.batch;
    train.lr0 = args.lr;
    if pipeline::mask_pooling(&args.mask_pool).is_none() {
        return Err(format!("unknown mask pooling '{}'", args.mask_pool).into());
    }
    Ok(RunSpec {
        model,
        dataset: String::new(),
        magnets: MagnetsSettings {
            masks_per_channel: args.masks,
            concepts: args.concepts,
            temperature: args.tau,
            lambda_spars: args.lspars,
            lambda_ortho: args.lortho,
            noise,
            unet_widths: parse_widths(&args.widths)?,
        },
        train,
        linear_lambda: args.lambda,
        mask_pool: args.mask_pool.clone(),
        ig_steps: args.ig_steps,
    })
}

fn run_training(mut spec: RunSpec, data: &PathBuf, out: Option<PathBuf>, json: bool) -> CliResult {
    let (train_raw, test_raw) = pipeline::read_pair(data)?;
    spec.dataset = train_raw.name.clone();
    let out = out.unwrap_or_else(default_out);
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let outcome = pipeline::train_model(&spec, &train_raw, &test_raw)?;
    formats::save_checkpoint(&outcome.checkpoint, &out.join("checkpoint.mgck"))?;
    report::write_runlog(&outcome.runlog, &out.join("runlog.jsonl"))?;
    outcome.report.save(&out.join("metrics.json"))?;
    let spec_json = serde_json::to_string_pretty(&spec).map_err(|e| e.to_string())?;
    std::fs::write(out.join("runspec.json"), spec_json + "\n").map_err(|e| e.to_string())?;
    if json {
        println!("{}", serde_json::to_string(&outcome.report).map_err(|e| e.to_string())?);
    } else {
        let r = &outcome.report;
        println!(
            "{} on {}: rmse {:.4}, r2 {:.4}{}",
            r.model,
            r.dataset,
            r.rmse_raw,
            r.r2,
            match (r.expl_auc_mean, r.expl_f1_mean) {
                (Some(a), Some(f)) => format!(", explanation auc {a:.3} f1 {f:.3}"),
                _ => String::new(),
            }
        );
        println!("artifacts in {}", out.display());
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let spec = build_spec(&args)?;
    run_training(spec, &args.data, args.out.clone(), args.json)
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let checkpoint = formats::load_checkpoint(&args.checkpoint)?;
    let (_, test_raw) = pipeline::read_pair(&args.data)?;
    if pipeline::mask_pooling(&args.mask_pool).is_none() {
        return Err(format!("unknown mask pooling '{}'", args.mask_pool).into());
    }
    if let ModelCheckpoint::Magnets { model, .. } = &checkpoint {
        if model.config.channels != test_raw.c || model.config.length != test_raw.t {
            return Err(format!(
                "checkpoint expects c={}, t={} but dataset has c={}, t={}",
                model.config.channels, model.config.length, test_raw.c, test_raw.t
            )
            .into());
        }
    }
    let spec = RunSpec {
        model: ModelKind::Mean,
        dataset: test_raw.name.clone(),
        magnets: MagnetsSettings::default(),
        train: TrainConfig::new(0),
        linear_lambda: 1.0,
        mask_pool: args.mask_pool.clone(),
        ig_steps: args.ig_steps,
    };
    let started = std::time::Instant::now();
    let mut report = pipeline::evaluate(&checkpoint, &test_raw, &spec, 0.0)?;
    report.wall_ms = started.elapsed().as_secs_f64() * 1e3;

    if let Some(attr_path) = &args.export_attr {
        let ModelCheckpoint::Cnn { model, scaler } = &checkpoint else {
            return Err("attribution export needs a cnn checkpoint".to_string().into());
        };
        let mut rows = Vec::new();
        for i in 0..test_raw.n {
            let xs = scaler.transform_sample(test_raw.sample_x(i), test_raw.c, test_raw.t);
            let x = magnets_core::Tensor::new(&[test_raw.c, test_raw.t], xs)
                .map_err(magnets_core::Error::from)?;
            let attr =
                magnets_core::baselines::integrated_gradients(model, &x, None, args.ig_steps)?;
            rows.push((i, attr));
        }
        report::export_attributions(&rows, &test_raw, attr_path)?;
    }

    if args.json {
        println!("{}", serde_json::to_string(&report).map_err(|e| e.to_string())?);
    } else {
        println!(
            "{} on {}: rmse {:.4}, r2 {:.4}{}",
            report.model,
            report.dataset,
            report.rmse_raw,
            report.r2,
            match (report.expl_auc_mean, report.expl_f1_mean) {
                (Some(a), Some(f)) => format!(", explanation auc {a:.3} f1 {f:.3}"),
                _ => String::new(),
            }
        );
    }
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> CliResult {
    let checkpoint = formats::load_checkpoint(&args.checkpoint)?;
    let ModelCheckpoint::Magnets { model, scaler } = checkpoint else {
        return Err("explain needs a magnets checkpoint".to_string().into());
    };
    let (_, test_raw) = pipeline::read_pair(&args.data)?;
    if args.sample >= test_raw.n {
        return Err(format!(
            "sample {} out of range (test split has {})",
            args.sample, test_raw.n
        )
        .into());
    }
    let out = args
        .out
        .unwrap_or_else(default_out)
        .join(format!("sample_{}", args.sample));
    let xs = scaler.transform_sample(test_raw.sample_x(args.sample), test_raw.c, test_raw.t);
    let x = magnets_core::Tensor::new(&[test_raw.c, test_raw.t], xs)
        .map_err(magnets_core::Error::from)?;
    let expl = model.explain(&x)?;
    report::export_explanation(
        &expl,
        &model.beta,
        model.head_w.data(),
        model.head_b.item(),
        &scaler,
        &out,
    )?;
    println!(
        "sample {}: prediction {:.4} (raw {:.4}), target {:.4}; exports in {}",
        args.sample,
        expl.prediction,
        scaler.invert_y(expl.prediction),
        test_raw.y[args.sample],
        out.display()
    );
    Ok(())
}

fn cmd_repro(args: ReproArgs) -> CliResult {
    let seeds: Vec<u64> = args
        .seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad seeds '{}': {e}", args.seeds))?;
    let cfg = ReproConfig {
        seeds,
        scale: args.scale,
        epochs: args.epochs,
        unet_widths: parse_widths(&args.widths)?,
        ig_steps: args.ig_steps,
        full_lambda0: args.full,
        linear_lambda: 1.0,
    };
    let out = args.out.unwrap_or_else(default_out);
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let report = repro::run_repro(&cfg, Some(&out), |r| {
        eprintln!(
            "done: {} {} seed {} (rmse {:.4}, r2 {:.4})",
            r.dataset, r.model, r.seed, r.rmse_raw, r.r2
        );
    })?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    std::fs::write(out.join("repro_report.json"), json + "\n").map_err(|e| e.to_string())?;
    if args.json {
        println!("{}", serde_json::to_string(&report).map_err(|e| e.to_string())?);
    } else {
        println!("{}", repro::comparison_table(&report));
        println!("total wall time: {:.1}s; report in {}", report.wall_s, out.display());
    }
    Ok(())
}

fn cmd_run(args: RunFileArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| e.to_string())?;
    let spec: RunSpec = serde_json::from_str(&text).map_err(|e| format!("run file: {e}"))?;
    run_training(spec, &args.data, args.out, args.json)
}
