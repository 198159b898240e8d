use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use tlda_core::io::{load_model, read_labels, read_tensor, save_model, write_labels, write_tensor};
use tlda_core::transforms::truncate_padding;
use tlda_core::{
    fit, kfold_cv, nn_classify, synthesize, within_conditioning, DenseTensor, Error,
    FitConfig, LabeledTensorDataset, Method, RobustParams, SynthSpec, TrainedModel, TransformKind,
    DEFAULT_FOLDS,
};

#[derive(Parser)]
#[command(name = "tlda", version, about = "Tensor discriminant analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded labeled dataset: PREFIX.tnsr and PREFIX.labels.csv.
    Synth(SynthArgs),
    /// Fit a model and write it with its sidecar files.
    Train(TrainArgs),
    /// Classify labeled data with a saved model and write accuracy metrics.
    Evaluate(EvaluateArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Project samples with a saved model.
    Project(ProjectArgs),
    /// Per-slice condition numbers of the within-class scatter.
    ConditionReport(ConditionArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long = "per-class")]
    per_class: usize,
    /// Sample dims: mode 1 first, then the trailing modes.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 10.0)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Duplicate feature row 0 into row 1 so within-class scatter is singular.
    #[arg(long)]
    force_singular: bool,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "homlda")]
    method: Method,
    #[arg(long, default_value = "dft")]
    transform: TransformKind,
    /// Retained dimension (default: classes - 1).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long = "kappa-threshold", default_value_t = 1e5)]
    kappa_threshold: f64,
    #[arg(long, default_value_t = 0.98)]
    energy: f64,
}

impl ModelArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            method: self.method,
            p: self.p,
            transform: self.transform,
            robust: RobustParams {
                kappa_threshold: self.kappa_threshold,
                energy: self.energy,
                ..RobustParams::default()
            },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "model-out")]
    model_out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long = "metrics-out")]
    metrics_out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "metrics-out")]
    metrics_out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConditionArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "dft")]
    transform: TransformKind,
    #[arg(long = "kappa-threshold", default_value_t = 1e5)]
    kappa_threshold: f64,
    #[arg(long, default_value_t = 0.98)]
    energy: f64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(msg) => Failure::Usage(msg),
            other => Failure::Data(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn load_dataset(args: &DataArgs) -> Result<LabeledTensorDataset, Failure> {
    let data = read_tensor(&args.data)?;
    let labels = read_labels(&args.labels)?;
    Ok(LabeledTensorDataset::new(data, labels)?)
}

fn config_line(cfg: &FitConfig) -> String {
    let p = cfg.p.map_or("auto".to_string(), |p| p.to_string());
    format!(
        "method={} transform={} p={} kappa_threshold={} energy={}",
        cfg.method, cfg.transform, p, cfg.robust.kappa_threshold, cfg.robust.energy
    )
}

fn model_config(model: &TrainedModel) -> String {
    match model {
        TrainedModel::Tensor(m) => {
            let params = m.robust.unwrap_or(RobustParams {
                kappa_threshold: m.conditioning.before.threshold,
                ..RobustParams::default()
            });
            format!(
                "method={} transform={} p={} kappa_threshold={} energy={}",
                m.method, m.spec.kind, m.p, params.kappa_threshold, params.energy
            )
        }
        TrainedModel::Matrix(m) => format!("method={} p={}", Method::MatrixLda, m.p),
    }
}

fn metrics_csv(meta: &[String], accuracies: &[f64], mean: f64, std: f64) -> String {
    let mut out = String::new();
    for line in meta {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("fold,accuracy,std\n");
    for (f, a) in accuracies.iter().enumerate() {
        let _ = writeln!(out, "{f},{a},");
    }
    let _ = writeln!(out, "mean,{mean},{std}");
    out
}

fn run_synth(a: SynthArgs) -> Result<(), Failure> {
    let spec = SynthSpec {
        classes: a.classes,
        samples_per_class: a.per_class,
        sample_dims: a.dims,
        class_separation: a.sep,
        noise_sigma: a.sigma,
        seed: a.seed,
        force_singular: a.force_singular,
    };
    let ds = synthesize(&spec)?;
    let prefix = a.out.as_os_str().to_owned();
    let with = |suffix: &str| {
        let mut s = prefix.clone();
        s.push(suffix);
        PathBuf::from(s)
    };
    write_tensor(with(".tnsr"), ds.data())?;
    write_labels(with(".labels.csv"), ds.labels())?;
    info!("wrote {} samples with dims {:?}", ds.len(), ds.data().dims());
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<(), Failure> {
    let ds = load_dataset(&a.data)?;
    let cfg = a.model.config();
    let model = fit(&ds, &cfg)?;
    if let TrainedModel::Tensor(m) = &model {
        let ill = m.conditioning.before.ill_count();
        info!("{ill} of {} within-class slices ill-conditioned", m.conditioning.before.slices.len());
    }
    save_model(&a.model_out, &model)?;
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let predicted = nn_classify(&model, ds.data())?;
    let correct = predicted.iter().zip(ds.labels()).filter(|(p, t)| p == t).count();
    let accuracy = if ds.is_empty() {
        f64::NAN
    } else {
        correct as f64 / ds.len() as f64
    };
    let meta = vec![model_config(&model), format!("samples={}", ds.len())];
    fs::write(&a.metrics_out, metrics_csv(&meta, &[accuracy], accuracy, 0.0))?;
    println!("accuracy {accuracy} ({correct}/{})", ds.len());
    Ok(())
}

fn run_cv(a: CvArgs) -> Result<(), Failure> {
    let ds = load_dataset(&a.data)?;
    let cfg = a.model.config();
    let report = kfold_cv(&ds, a.folds, &cfg, a.seed)?;
    for (f, s) in report.wall_seconds.iter().enumerate() {
        info!("fold {f}: {:.3} s", s);
    }
    let meta = vec![
        config_line(&cfg),
        format!("folds={} seed={} samples={}", a.folds, a.seed, ds.len()),
    ];
    fs::write(
        &a.metrics_out,
        metrics_csv(&meta, &report.accuracies, report.mean, report.std),
    )?;
    println!("mean accuracy {} (std {})", report.mean, report.std);
    Ok(())
}

fn run_project(a: ProjectArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let x = read_tensor(&a.data)?;
    let projected = match &model {
        TrainedModel::Tensor(m) => truncate_padding(&tlda_core::project(m, &x)?, &m.spec)?,
        TrainedModel::Matrix(m) => {
            let y = m.project(&x)?;
            DenseTensor::new(vec![y.nrows(), y.ncols()], y.as_slice().to_vec())?
        }
    };
    write_tensor(&a.out, &projected)?;
    Ok(())
}

fn index_label(index: &[usize]) -> String {
    if index.is_empty() {
        return "-".into();
    }
    index
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(":")
}

fn run_condition(a: ConditionArgs) -> Result<(), Failure> {
    let ds = load_dataset(&a.data)?;
    let spec = ds.transform_spec(a.transform);
    let params = RobustParams {
        kappa_threshold: a.kappa_threshold,
        energy: a.energy,
        ..RobustParams::default()
    };
    let cond = within_conditioning(&ds, &spec, &params)?;
    let after = cond.after.as_ref().expect("post-re-estimation report");
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# transform={} kappa_threshold={} energy={}",
        a.transform, params.kappa_threshold, params.energy
    );
    out.push_str("multi_index,kappa_pre,log10_kappa_pre,kappa_post,log10_kappa_post,ill_flag\n");
    for (pre, post) in cond.before.slices.iter().zip(&after.slices) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            index_label(&pre.index),
            pre.kappa,
            pre.kappa.log10(),
            post.kappa,
            post.kappa.log10(),
            u8::from(pre.ill)
        );
    }
    fs::write(&a.out, out)?;
    println!(
        "{} of {} slices at or above {}",
        cond.before.ill_count(),
        cond.before.slices.len(),
        params.kappa_threshold
    );
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("TLDA_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("TLDA_THREADS must be a count, got {value:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Cv(a) => run_cv(a),
        Command::Project(a) => run_project(a),
        Command::ConditionReport(a) => run_condition(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            match &e {
                Error::Io(io) => eprintln!("error: {io}"),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(2)
        }
    }
}
