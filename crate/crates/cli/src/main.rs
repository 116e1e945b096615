use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use pfd_core::classifier::{load_model, save_model, train_with_history, TrainConfig};
use pfd_core::eval::{
    balanced_accuracy, calibrate_threshold, emit_report, evaluate, fisher_ratio, pca_project2d, robustness_sweep,
    score_features, write_pca_csv, EvalReport, ReportFormat, Separability,
};
use pfd_core::features::{extract_features, read_feature_file, write_feature_file, Augmentation, Backend, FeatureSet};
use pfd_core::imaging::Degradation;
use pfd_core::manifest::{load_manifest, Label, Split};
use pfd_core::synthetic::write_toy_corpus;
use pfd_core::{Error, ErrorKind, Result};

/// Perceptual-feature detector for AI-generated images.
#[derive(Debug, Parser)]
#[command(name = "pfd", version)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract a feature file from a manifest.
    Extract(ExtractArgs),
    /// Train a classifier on the training split of a feature file.
    Train(TrainArgs),
    /// Choose the decision threshold on a validation split.
    Calibrate(CalibrateArgs),
    /// Evaluate a model and write a report.
    Eval(EvalArgs),
    /// Evaluate under blur and JPEG degradations of the test images.
    Robustness(RobustnessArgs),
    /// Class separability of a feature file, with an optional 2-D projection.
    Separability(SeparabilityArgs),
    /// Write a small procedural corpus with a manifest.
    ToyCorpus(ToyCorpusArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON training configuration; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `nss` or `file:PATH`.
    #[arg(long, default_value = "nss")]
    backend: String,
    #[arg(long)]
    out: PathBuf,
    /// Apply the configured augmentation policy to training records.
    #[arg(long)]
    augment: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "train")]
    split: Split,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "val")]
    split: Split,
    /// Model file to write with the calibrated threshold.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Overrides the model's stored threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Report path; a `.csv` extension selects CSV, anything else JSON.
    #[arg(long)]
    out: PathBuf,
    /// Dataset name recorded in the report (default: feature file stem).
    #[arg(long)]
    dataset: Option<String>,
    /// Also record the Fisher ratio of the evaluated split.
    #[arg(long)]
    separability: bool,
}

#[derive(Debug, Args)]
struct RobustnessArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "nss")]
    backend: String,
    /// `name:l1,l2,...`; repeat or separate with `;`. Defaults to blur 1-5
    /// and JPEG 90-30.
    #[arg(long)]
    degradations: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SeparabilityArgs {
    #[arg(long)]
    features: PathBuf,
    /// Restrict to one split (default: all records).
    #[arg(long)]
    split: Option<Split>,
    /// CSV of the 2-D principal-component projection.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ToyCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    /// Number of real/fake image pairs.
    #[arg(long, default_value_t = 40)]
    pairs: usize,
    #[arg(long, default_value_t = 96)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.augment.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_split(path: &Path, split: Option<Split>) -> Result<FeatureSet> {
    let fs = read_feature_file(path)?;
    let fs = match split {
        Some(s) => fs.split_view(s),
        None => fs,
    };
    if fs.is_empty() {
        return Err(Error::Validation(format!(
            "{} has no records{}",
            path.display(),
            split.map(|s| format!(" in split {s}")).unwrap_or_default()
        )));
    }
    Ok(fs)
}

fn parse_degradations(specs: &[String]) -> Result<Vec<Degradation>> {
    if specs.is_empty() {
        return Ok(Degradation::default_sweep().into_iter().flatten().collect());
    }
    let mut out = Vec::new();
    for part in specs
        .iter()
        .flat_map(|s| s.split(';'))
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        out.extend(Degradation::parse_sweep(part)?);
    }
    Ok(out)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn run(command: Command) -> Result<Value> {
    match command {
        Command::Extract(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let backend: Backend = a.backend.parse()?;
            let augment = if a.augment {
                Some(Augmentation::Policy(load_config(&a.config)?.augment))
            } else {
                None
            };
            let fs = extract_features(&manifest, &backend, augment.as_ref())?;
            write_feature_file(&fs, &a.out)?;
            Ok(json!({
                "command": "extract",
                "records": fs.len(),
                "dim": fs.dim,
                "backend": fs.backend_name,
                "out": path_str(&a.out),
            }))
        }
        Command::Train(a) => {
            let cfg = load_config(&a.config)?;
            let fs = load_split(&a.features, Some(a.split))?;
            let outcome = train_with_history(&fs, &cfg)?;
            let scores = score_features(&outcome.model, &fs)?;
            let labels: Vec<Label> = fs.records.iter().map(|r| r.label).collect();
            let correct = scores
                .iter()
                .zip(&labels)
                .filter(|(&s, &l)| (s >= outcome.model.threshold) == (l == Label::Fake))
                .count();
            save_model(&outcome.model, &a.out)?;
            Ok(json!({
                "command": "train",
                "records": fs.len(),
                "epochs": cfg.epochs,
                "final_loss": outcome.epoch_losses.last(),
                "train_accuracy": 100.0 * correct as f64 / fs.len() as f64,
                "model_digest": outcome.model.digest(),
                "out": path_str(&a.out),
            }))
        }
        Command::Calibrate(a) => {
            let mut model = load_model(&a.model)?;
            let fs = load_split(&a.features, Some(a.split))?;
            let t = calibrate_threshold(&model, &fs)?;
            let scores = score_features(&model, &fs)?;
            let labels: Vec<Label> = fs.records.iter().map(|r| r.label).collect();
            model.threshold = t;
            model.validate().map_err(|_| {
                Error::Validation(format!(
                    "best validation threshold {t} lies at the end of the score range; the model is no better than chance"
                ))
            })?;
            save_model(&model, &a.out)?;
            Ok(json!({
                "command": "calibrate",
                "threshold": t,
                "balanced_accuracy": 100.0 * balanced_accuracy(&scores, &labels, t),
                "balanced_accuracy_at_half": 100.0 * balanced_accuracy(&scores, &labels, 0.5),
                "out": path_str(&a.out),
            }))
        }
        Command::Eval(a) => {
            let model = load_model(&a.model)?;
            let fs = load_split(&a.features, Some(a.split))?;
            let mut report = evaluate(&model, &fs, a.threshold)?;
            report.dataset = a.dataset.unwrap_or_else(|| {
                a.features
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            if a.separability {
                report.separability = Some(Separability {
                    fisher_ratio: fisher_ratio(&fs, None)?,
                    pca2d: None,
                });
            }
            emit_report(&report, &a.out, ReportFormat::from_path(&a.out))?;
            Ok(json!({
                "command": "eval",
                "macc": report.macc,
                "threshold": report.threshold,
                "subsets": report.subsets.len(),
                "out": path_str(&a.out),
            }))
        }
        Command::Robustness(a) => {
            let model = load_model(&a.model)?;
            let manifest = load_manifest(&a.manifest)?;
            let backend: Backend = a.backend.parse()?;
            let degradations = parse_degradations(&a.degradations)?;
            let points = robustness_sweep(&model, &manifest, &backend, &degradations)?;
            let clean = &points[0];
            let mut report = EvalReport::from_subsets(manifest.name.clone(), clean.subsets.clone(), model.threshold)?;
            report.provenance.model_digest = model.digest();
            report.robustness = points;
            emit_report(&report, &a.out, ReportFormat::from_path(&a.out))?;
            Ok(json!({
                "command": "robustness",
                "points": report.robustness.len(),
                "clean_macc": report.macc,
                "out": path_str(&a.out),
            }))
        }
        Command::Separability(a) => {
            let fs = load_split(&a.features, a.split)?;
            let j = fisher_ratio(&fs, None)?;
            if let Some(out) = &a.out {
                write_pca_csv(&pca_project2d(&fs)?, out)?;
            }
            Ok(json!({
                "command": "separability",
                "records": fs.len(),
                "fisher_ratio": j,
                "out": a.out.as_deref().map(path_str),
            }))
        }
        Command::ToyCorpus(a) => {
            let manifest = write_toy_corpus(&a.out, a.pairs, a.side, a.seed)?;
            Ok(json!({
                "command": "toy-corpus",
                "records": manifest.records.len(),
                "manifest": path_str(&a.out.join("manifest.json")),
            }))
        }
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => 2,
        ErrorKind::Validation => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
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
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
