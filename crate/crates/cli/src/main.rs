//! `lcnn` command-line interface.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use config::RunConfig;
use lcnn::augment::{augment_sample, resize, INPUT_SIZE};
use lcnn::data::synth::{generate_dataset, SynthConfig};
use lcnn::data::{decode_image, encode_png, ingest_directory, prepare_dataset, Loader, Manifest, Split};
use lcnn::model::{
    emit_curves, evaluate, fresh_model, load_weights, lr_sweep, save_weights, train, Evaluation, Model,
    Precision, THRESHOLD,
};
use lcnn::{Real, Rng, Tensor};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Error with a stable process exit code: 2 input, 3 model/weights, 1 other.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<lcnn::Error> for CliError {
    fn from(e: lcnn::Error) -> Self {
        use lcnn::Error::*;
        let code = match &e {
            CorruptWeights(_) | WeightMismatch(_) => 3,
            Dataset(_) | Decode { .. } | InvalidArgument(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "lcnn", version, about = "Train and run a small CNN tumor classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, split, optionally augment, train, and write artifacts.
    Train(TrainArgs),
    /// Train once per learning rate and write `sweep.csv`.
    LrSweep(TrainArgs),
    /// Score saved weights on a dataset split.
    Eval(EvalArgs),
    /// Classify one image.
    Predict(PredictArgs),
    /// Write augmented samples and their drawn parameters.
    AugmentPreview(PreviewArgs),
    /// Generate a synthetic two-class dataset.
    Synth(SynthArgs),
}

/// Settings shared by every command that builds a [`RunConfig`].
#[derive(Args, Default)]
struct RunFlags {
    /// `key = value` config file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// on/off
    #[arg(long)]
    augment: Option<String>,
    #[arg(long)]
    multiplier: Option<String>,
    #[arg(long)]
    train_ratio: Option<String>,
    /// 32 or 64
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    conv2_kernels: Option<String>,
    /// Evaluation threads [env: LCNN_THREADS]
    #[arg(long)]
    threads: Option<String>,
    /// Comma-separated learning rates for the sweep.
    #[arg(long)]
    sweep: Option<String>,
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if self.threads.is_none() {
            if let Ok(v) = std::env::var("LCNN_THREADS") {
                cfg.set("threads", &v)?;
            }
        }
        let flags = [
            ("data", &self.data),
            ("out", &self.out),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("optimizer", &self.optimizer),
            ("batch_size", &self.batch_size),
            ("seed", &self.seed),
            ("augment", &self.augment),
            ("multiplier", &self.multiplier),
            ("train_ratio", &self.train_ratio),
            ("precision", &self.precision),
            ("conv2_kernels", &self.conv2_kernels),
            ("threads", &self.threads),
            ("sweep", &self.sweep),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Run the learning-rate sweep instead of a single training run.
    #[arg(long)]
    lr_sweep: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    weights: PathBuf,
    /// Split to score: test, train or all.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 64)]
    conv2_kernels: usize,
    image: PathBuf,
}

#[derive(Args)]
struct PreviewArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 800)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fainter, smaller lesions under heavier noise.
    #[arg(long)]
    hard: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) if a.lr_sweep => cmd_sweep(&a.run),
        Command::Train(a) => cmd_train(&a.run),
        Command::LrSweep(a) => cmd_sweep(&a.run),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::AugmentPreview(a) => cmd_augment_preview(&a),
        Command::Synth(a) => cmd_synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::input(format!("--{flag} is required")))
}

fn data_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    let dir = require(&cfg.data, "data")?;
    if !dir.is_dir() {
        return Err(CliError::input(format!("data directory {} does not exist", dir.display())));
    }
    Ok(dir)
}

fn create_out(cfg: &RunConfig) -> Result<&Path, CliError> {
    let out = require(&cfg.out, "out")?;
    fs::create_dir_all(out).map_err(|e| CliError::internal(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

fn manifest_for(cfg: &RunConfig, with_augment: bool) -> Result<Manifest, CliError> {
    let aug = (with_augment && cfg.augment).then_some(&cfg.aug);
    Ok(prepare_dataset(data_dir(cfg)?, cfg.split_spec(), aug, cfg.multiplier)?)
}

fn metric(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |v| format!("{v:.4}"))
}

fn metric_line(e: &Evaluation) -> String {
    let m = &e.metrics;
    format!(
        "accuracy {} specificity {} recall {} f1 {}",
        metric(m.accuracy),
        metric(m.specificity),
        metric(m.recall),
        metric(m.f1)
    )
}

fn cmd_train(flags: &RunFlags) -> Result<(), CliError> {
    let cfg = flags.resolve()?;
    let manifest = manifest_for(&cfg, true)?;
    let out = create_out(&cfg)?;
    write(&out.join("config.txt"), &cfg.snapshot())?;
    manifest.write_csv(&out.join("manifest.csv"))?;
    match cfg.precision {
        Precision::F32 => run_train::<f32>(&cfg, manifest, out),
        Precision::F64 => run_train::<f64>(&cfg, manifest, out),
    }
}

fn run_train<T: Real>(cfg: &RunConfig, manifest: Manifest, out: &Path) -> Result<(), CliError> {
    let mut model = fresh_model::<T>(&cfg.model_spec(), cfg.seed)?;
    for shape in model.shapes() {
        info!("{shape}");
    }
    info!("trainable parameters: {}", model.param_count());
    let mut loader = Loader::new(manifest, INPUT_SIZE);
    let outcome = train(&mut model, &mut loader, &cfg.train_config())?;
    save_weights(&model, &out.join("weights.bin"))?;
    let mut best = model.clone();
    best.restore(&outcome.best)?;
    save_weights(&best, &out.join("best.bin"))?;
    emit_curves(&outcome.log, out)?;
    println!("final: {}", metric_line(&outcome.log.final_eval));
    println!("best (epoch {}): {}", outcome.log.best_epoch, metric_line(&outcome.log.best_eval));
    Ok(())
}

fn cmd_sweep(flags: &RunFlags) -> Result<(), CliError> {
    let cfg = flags.resolve()?;
    let manifest = manifest_for(&cfg, true)?;
    let out = create_out(&cfg)?;
    write(&out.join("config.txt"), &cfg.snapshot())?;
    let mut loader = Loader::new(manifest, INPUT_SIZE);
    let spec = cfg.model_spec();
    let tc = cfg.train_config();
    let rows = match cfg.precision {
        Precision::F32 => lr_sweep::<f32>(&spec, &mut loader, &tc, &cfg.sweep)?,
        Precision::F64 => lr_sweep::<f64>(&spec, &mut loader, &tc, &cfg.sweep)?,
    };
    let mut csv = String::from("eta,test_acc,best\n");
    for r in &rows {
        let acc = r.test_acc.map_or("diverged".to_string(), |a| a.to_string());
        csv.push_str(&format!("{},{},{}\n", r.eta, acc, r.best));
        println!("{:<8} {:<10}{}", r.eta, acc, if r.best { " <- best" } else { "" });
    }
    write(&out.join("sweep.csv"), &csv)
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let cfg = args.run.resolve()?;
    let split = match args.split.as_str() {
        "all" => None,
        s => Some(s.parse::<Split>().map_err(|e| CliError::input(e.to_string()))?),
    };
    // The test split never depends on augmentation; the train split is scored
    // on original images only.
    let mut manifest = manifest_for(&cfg, false)?;
    if split.is_none() {
        manifest.records.iter_mut().for_each(|r| r.split = Some(Split::Test));
    }
    let spec = cfg.model_spec();
    let mut loader = Loader::new(manifest, INPUT_SIZE);
    let split = split.unwrap_or(Split::Test);
    let eval = match cfg.precision {
        Precision::F32 => {
            let m: Model<f32> = load_weights(&args.weights, &spec)?;
            evaluate(&m, &mut loader, split, cfg.batch_size, cfg.threads)?
        }
        Precision::F64 => {
            let m: Model<f64> = load_weights(&args.weights, &spec)?;
            evaluate(&m, &mut loader, split, cfg.batch_size, cfg.threads)?
        }
    };
    let summary = format!("{}\nloss {}\n{}\n", metric_line(&eval), eval.loss, eval.confusion);
    print!("{summary}");
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out).map_err(|e| CliError::internal(format!("cannot create {}: {e}", out.display())))?;
        write(&out.join("eval.txt"), &summary)?;
        let json = serde_json::to_string_pretty(&eval).map_err(|e| CliError::internal(e.to_string()))?;
        write(&out.join("eval.json"), &(json + "\n"))?;
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let model: Model<f32> = load_weights(&args.weights, &lcnn::model::ModelSpec::standard(args.conv2_kernels))?;
    let img = decode_image(&args.image).map_err(|e| CliError::input(e.to_string()))?;
    let img = resize(&img, INPUT_SIZE, INPUT_SIZE)?;
    let x = Tensor::from_vec([1, INPUT_SIZE, INPUT_SIZE, 1], img.into_pixels())?;
    let p = model.predict(&x)?[0];
    let label = if p >= THRESHOLD { "tumor" } else { "normal" };
    println!("{label} {p:.6}");
    Ok(())
}

fn cmd_augment_preview(args: &PreviewArgs) -> Result<(), CliError> {
    if !args.data.is_dir() {
        return Err(CliError::input(format!(
            "data directory {} does not exist",
            args.data.display()
        )));
    }
    let manifest = ingest_directory(&args.data)?.manifest;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", args.out.display())))?;
    let cfg = lcnn::augment::AugmentConfig::default();
    let mut rng = Rng::new(args.seed);
    let mut csv = String::from("file,source,sigma,brightness,contrast,degrees,dx,dy,scale\n");
    for i in 0..args.count {
        let rec = &manifest.records[rng.below(manifest.len())];
        let img = decode_image(&rec.path)?;
        let mut sample_rng = rng.child(&format!("preview-{i}"));
        let (aug, p) = augment_sample(&img, &cfg, &mut sample_rng)?;
        let name = format!("aug_{i:04}.png");
        encode_png(&aug, &args.out.join(&name))?;
        csv.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{}\n",
            rec.path.display(),
            p.sigma,
            p.brightness,
            p.contrast,
            p.degrees,
            p.dx,
            p.dy,
            p.scale
        ));
    }
    write(&args.out.join("params.csv"), &csv)?;
    println!("wrote {} samples to {}", args.count, args.out.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.count < 2 {
        return Err(CliError::input("--count must be at least 2"));
    }
    let cfg = if args.hard { SynthConfig::hard() } else { SynthConfig::default() };
    let [n, t] = generate_dataset(&args.out, args.count, args.seed, &cfg)?;
    println!("wrote {n} normal and {t} tumor images to {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "epochs = 7\nlr = 0.01\n").unwrap();
        let flags = RunFlags {
            config: Some(path),
            lr: Some("0.002".into()),
            threads: Some("1".into()),
            ..Default::default()
        };
        let cfg = flags.resolve().unwrap();
        assert_eq!((cfg.epochs, cfg.lr), (7, 0.002));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(lcnn::Error::CorruptWeights("x".into())).code, 3);
        assert_eq!(CliError::from(lcnn::Error::Dataset("x".into())).code, 2);
    }
}
