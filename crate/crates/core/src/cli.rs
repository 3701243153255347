//! Command-line front end.
//!
//! Parameter precedence: command-line flags, then the `--config` file
//! (`key = value`, keys named like the long flags), then the environment
//! (`ENSEMBLEKIT_DATA` for the dataset directory), then built-in defaults.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::KeyValueConfig;
use crate::dataset::{self, augment_with_hflip, load_split, subset_per_class, Split, CLASS_NAMES};
use crate::ensemble::{
    experiment_spec, parse_validation, run_ensemble, EnsembleError, EnsembleRun, EnsembleSpec,
    Experiment, Scale,
};
use crate::eval::{evaluate_with_cap, render_report, ReportFormat, DEFAULT_ERROR_CAP};
use crate::fcnn::{self, FcnnConfig, FcnnError};
use crate::features::{read_fset_file, write_fset_file, FeatureSet};
use crate::hog::{hog_feature_set, HogConfig};
use crate::manifest::RunManifest;
use crate::pca::{self, PcaError};
use crate::pixel::pixel_feature_set;

pub const DATA_ENV: &str = "ENSEMBLEKIT_DATA";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "ensemblekit",
    version,
    about = "Feature-ensemble CIFAR-10 classification toolkit"
)]
struct Cli {
    /// `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel feature extraction (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset utilities.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Compute built-in features for a split and write an FSET file.
    #[command(subcommand)]
    Extract(ExtractCmd),
    /// Validate an externally produced FSET file.
    Import(ImportArgs),
    /// Fit or apply principal component analysis.
    #[command(subcommand)]
    Pca(PcaCmd),
    /// Train the classifier head on FSET features.
    Train(TrainArgs),
    /// Score a trained model on an FSET file.
    Evaluate(EvaluateArgs),
    /// Feature-ensemble pipelines.
    #[command(subcommand)]
    Ensemble(EnsembleCmd),
    /// Run one of the three fusion experiments.
    Reproduce(ReproduceArgs),
}

#[derive(Subcommand, Debug)]
enum DatasetCmd {
    /// Print per-split sample counts and class histograms.
    Inspect(DataDirArg),
}

#[derive(Args, Debug)]
struct DataDirArg {
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ExtractCmd {
    Hog(ExtractHogArgs),
    Pixel(ExtractCommon),
}

#[derive(Args, Debug)]
struct ExtractCommon {
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep a seeded subset of this many images per class.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    subset_seed: Option<u64>,
    /// Append horizontally flipped copies after the originals.
    #[arg(long)]
    augment: bool,
}

#[derive(Args, Debug)]
struct ExtractHogArgs {
    #[command(flatten)]
    common: ExtractCommon,
    #[arg(long)]
    orientations: Option<usize>,
    #[arg(long)]
    cell: Option<usize>,
    #[arg(long)]
    block: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
}

#[derive(Args, Debug)]
struct ImportArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Re-encode the validated set here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum PcaCmd {
    Fit(PcaFitArgs),
    Transform(PcaTransformArgs),
}

#[derive(Args, Debug)]
struct PcaFitArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PcaTransformArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct FcnnFlags {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    min_delta: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fcnn: FcnnFlags,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    error_cap: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum EnsembleCmd {
    Run(EnsembleRunArgs),
}

#[derive(Args, Debug)]
struct ReportOutput {
    /// Report destination; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Also save the trained classifier.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnsembleRunArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[command(flatten)]
    output: ReportOutput,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Directory with `{tlvgg,tlincep,cifarvgg}_{train,test}.fset` (full scale).
    #[arg(long)]
    features_dir: Option<PathBuf>,
    /// `test` (score early stopping on the test split) or `holdout:<fraction>`.
    #[arg(long)]
    validation: Option<String>,
    /// `train` or `train+test`.
    #[arg(long)]
    pca_fit_split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[command(flatten)]
    output: ReportOutput,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

fn is_numerical(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        let fcnn_numeric = |e: &FcnnError| matches!(e, FcnnError::NonFiniteLoss { .. });
        let pca_numeric =
            |e: &PcaError| matches!(e, PcaError::Decomposition(_) | PcaError::DegenerateData);
        if let Some(e) = cause.downcast_ref::<FcnnError>() {
            return fcnn_numeric(e);
        }
        if let Some(e) = cause.downcast_ref::<PcaError>() {
            return pca_numeric(e);
        }
        match cause.downcast_ref::<EnsembleError>() {
            Some(EnsembleError::Fcnn(e)) => fcnn_numeric(e),
            Some(EnsembleError::Pca(e)) => pca_numeric(e),
            _ => false,
        }
    })
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        if is_numerical(&err) {
            Failure::Numerical(err)
        } else {
            Failure::Data(err)
        }
    }
}

/// Resolves settings across flags, the config file and the environment.
struct Resolver<'a> {
    config: KeyValueConfig,
    env: &'a HashMap<String, String>,
}

impl Resolver<'_> {
    fn opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.config
            .get_parsed(key)
            .map_err(|e| Failure::Usage(e.to_string()))
    }

    fn required<T>(&self, flag: Option<T>, key: &str) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.opt(flag, key)?
            .ok_or_else(|| Failure::Usage(format!("missing required --{key}")))
    }

    fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    fn data_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
        self.opt(flag, "data-dir")?
            .or_else(|| self.env.get(DATA_ENV).map(PathBuf::from))
            .ok_or_else(|| {
                Failure::Usage(format!(
                    "dataset directory not given (--data-dir or {DATA_ENV})"
                ))
            })
    }

    fn parsed<T: FromStr<Err = String>>(
        &self,
        flag: Option<String>,
        key: &str,
    ) -> Result<Option<T>, Failure> {
        self.opt(flag, key)?
            .map(|s| s.parse().map_err(Failure::Usage))
            .transpose()
    }

    fn fcnn(&self, flags: &FcnnFlags, input_dim: usize) -> Result<FcnnConfig, Failure> {
        let d = FcnnConfig::new(input_dim);
        let hidden = match self.opt(flags.hidden.clone(), "hidden")? {
            Some(h) => h
                .split(',')
                .map(|w| {
                    w.trim()
                        .parse()
                        .map_err(|_| Failure::Usage(format!("bad hidden width '{w}'")))
                })
                .collect::<Result<Vec<usize>, _>>()?,
            None => d.hidden.clone(),
        };
        Ok(FcnnConfig {
            hidden,
            dropout_rate: self.or(flags.dropout, "dropout", d.dropout_rate)?,
            learning_rate: self.or(flags.lr, "lr", d.learning_rate)?,
            batch_size: self.or(flags.batch, "batch", d.batch_size)?,
            max_epochs: self.or(flags.max_epochs, "max-epochs", d.max_epochs)?,
            patience: self.or(flags.patience, "patience", d.patience)?,
            min_delta: self.or(flags.min_delta, "min-delta", d.min_delta)?,
            seed: self.or(flags.seed, "seed", d.seed)?,
            ..d
        })
    }
}

struct Io<'a> {
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
}

/// Runs the CLI with the process's stdout and stderr.
pub fn dispatch<I, T>(argv: I, env: &HashMap<String, String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    // Unlocked handles: log records from worker threads also write to stderr.
    dispatch_with(argv, env, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Runs the CLI, writing normal output to `out` and diagnostics to `err`.
pub fn dispatch_with<I, T>(
    argv: I,
    env: &HashMap<String, String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let config = match &cli.config {
        Some(path) => match KeyValueConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_USAGE;
            }
        },
        None => KeyValueConfig::default(),
    };
    let resolver = Resolver { config, env };
    let threads = match resolver.opt(cli.threads, "threads") {
        Ok(t) => t.unwrap_or(0),
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            return EXIT_USAGE;
        }
        Err(_) => unreachable!("opt only fails with usage errors"),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build();
    // Output is buffered so the command body can move into the worker pool.
    let mut out_buf = Vec::new();
    let mut err_buf = Vec::new();
    let mut io = Io {
        out: &mut out_buf,
        err: &mut err_buf,
    };
    let result = match pool {
        Ok(pool) => pool.install(|| run(cli.command, &resolver, &mut io)),
        Err(e) => Err(Failure::Usage(format!(
            "cannot start {threads} threads: {e}"
        ))),
    };
    let _ = out.write_all(&out_buf);
    let _ = err.write_all(&err_buf);
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Usage(m) => {
                    let _ = writeln!(err, "error: {m}\n\n{}", synopsis());
                }
                Failure::Data(e) | Failure::Numerical(e) => {
                    let _ = writeln!(err, "error: {e:#}");
                }
            }
            f.code()
        }
    }
}

fn synopsis() -> String {
    use clap::CommandFactory;
    Cli::command().render_usage().to_string()
}

fn finish(
    io: &mut Io<'_>,
    mut manifest: RunManifest,
    started: Instant,
    output: Option<&Path>,
) -> Result<(), Failure> {
    manifest.duration = started.elapsed();
    match output {
        Some(path) => {
            let written = manifest
                .write_next_to(path)
                .with_context(|| format!("writing manifest for {}", path.display()))?;
            log::info!("manifest written to {}", written.display());
        }
        None => {
            let _ = write!(io.err, "{}", manifest.render());
        }
    }
    Ok(())
}

fn run(command: Command, r: &Resolver<'_>, io: &mut Io<'_>) -> Result<(), Failure> {
    let started = Instant::now();
    match command {
        Command::Dataset(DatasetCmd::Inspect(args)) => {
            let dir = r.data_dir(args.data_dir)?;
            let mut manifest = RunManifest::new("dataset inspect");
            manifest.param("data-dir", dir.display());
            for split in [Split::Train, Split::Test] {
                for p in split.paths(&dir) {
                    manifest
                        .input(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                }
                let set = load_split(&dir, split).map_err(anyhow::Error::from)?;
                let _ = writeln!(io.out, "{}: {} images", split.as_str(), set.len());
                for (name, count) in CLASS_NAMES.iter().zip(set.class_counts()) {
                    let _ = writeln!(io.out, "  {name:<11} {count}");
                }
            }
            finish(io, manifest, started, None)
        }
        Command::Extract(cmd) => {
            let (common, hog) = match cmd {
                ExtractCmd::Hog(a) => {
                    let d = HogConfig::default();
                    let cfg = HogConfig {
                        orientations: r.or(a.orientations, "orientations", d.orientations)?,
                        cell_size: r.or(a.cell, "cell", d.cell_size)?,
                        block_size: r.or(a.block, "block", d.block_size)?,
                        block_stride: r.or(a.stride, "stride", d.block_stride)?,
                        clip: r.or(a.clip, "clip", d.clip)?,
                    };
                    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
                    (a.common, Some(cfg))
                }
                ExtractCmd::Pixel(c) => (c, None),
            };
            let dir = r.data_dir(common.data_dir)?;
            let split: Split = r
                .parsed(common.split, "split")?
                .ok_or_else(|| Failure::Usage("missing required --split".into()))?;
            let out: PathBuf = r.required(common.out, "out")?;
            let per_class: Option<usize> = r.opt(common.per_class, "per-class")?;
            let subset_seed: u64 = r.or(common.subset_seed, "subset-seed", 2020)?;
            let mut set = load_split(&dir, split).map_err(anyhow::Error::from)?;
            if let Some(k) = per_class {
                set = subset_per_class(&set, k, subset_seed).map_err(anyhow::Error::from)?;
            }
            if common.augment {
                set = augment_with_hflip(&set);
            }
            let mut manifest = RunManifest::new(if hog.is_some() {
                "extract hog"
            } else {
                "extract pixel"
            });
            manifest
                .param("data-dir", dir.display())
                .param("split", split.as_str())
                .param("augment", common.augment);
            if let Some(k) = per_class {
                manifest.param("per-class", k).seed("subset", subset_seed);
            }
            let features = match hog {
                Some(cfg) => {
                    manifest
                        .param("orientations", cfg.orientations)
                        .param("cell", cfg.cell_size)
                        .param("block", cfg.block_size)
                        .param("stride", cfg.block_stride)
                        .param("clip", cfg.clip);
                    hog_feature_set(&set, &cfg).map_err(anyhow::Error::from)?
                }
                None => pixel_feature_set(&set),
            };
            for p in split.paths(&dir) {
                manifest
                    .input(&p)
                    .with_context(|| format!("reading {}", p.display()))?;
            }
            write_fset_file(&features, &out)
                .with_context(|| format!("writing {}", out.display()))?;
            let _ = writeln!(
                io.out,
                "wrote {} ({} x {}) to {}",
                features.name(),
                features.n(),
                features.d(),
                out.display()
            );
            finish(io, manifest, started, Some(&out))
        }
        Command::Import(args) => {
            let input: PathBuf = r.required(args.input, "in")?;
            let set = read_fset_file(&input)
                .with_context(|| format!("invalid FSET file {}", input.display()))?;
            let _ = writeln!(
                io.out,
                "{}: name '{}', n = {}, d = {}",
                input.display(),
                set.name(),
                set.n(),
                set.d()
            );
            let counts = dataset::class_counts(set.labels());
            for (name, count) in CLASS_NAMES.iter().zip(counts) {
                let _ = writeln!(io.out, "  {name:<11} {count}");
            }
            let mut manifest = RunManifest::new("import");
            manifest.input(&input).context("hashing input")?;
            if let Some(out) = r.opt(args.out, "out")? {
                write_fset_file(&set, &out)
                    .with_context(|| format!("writing {}", out.display()))?;
                finish(io, manifest, started, Some(&out))
            } else {
                finish(io, manifest, started, None)
            }
        }
        Command::Pca(PcaCmd::Fit(args)) => {
            let input: PathBuf = r.required(args.input, "in")?;
            let k: usize = r.required(args.k, "k")?;
            let model_path: PathBuf = r.required(args.model, "model")?;
            let set =
                read_fset_file(&input).with_context(|| format!("reading {}", input.display()))?;
            let model = pca::pca_fit(set.to_f64().view(), k).map_err(anyhow::Error::from)?;
            pca::write_pcam_file(&model, &model_path)
                .with_context(|| format!("writing {}", model_path.display()))?;
            if let Ok(ev) = model.cumulative_explained_variance() {
                let _ = writeln!(io.out, "{k} components explain {:.4} of the variance", ev);
            }
            if let Some(w) = model.rank_warning() {
                let _ = writeln!(
                    io.err,
                    "warning: requested {} components, numerical rank {}",
                    w.requested, w.numerical_rank
                );
            }
            let mut manifest = RunManifest::new("pca fit");
            manifest
                .param("k", k)
                .input(&input)
                .context("hashing input")?;
            finish(io, manifest, started, Some(&model_path))
        }
        Command::Pca(PcaCmd::Transform(args)) => {
            let model_path: PathBuf = r.required(args.model, "model")?;
            let input: PathBuf = r.required(args.input, "in")?;
            let out: PathBuf = r.required(args.out, "out")?;
            let model = pca::read_pcam_file(&model_path)
                .with_context(|| format!("reading {}", model_path.display()))?;
            let set =
                read_fset_file(&input).with_context(|| format!("reading {}", input.display()))?;
            let z = model
                .transform(set.to_f64().view())
                .map_err(anyhow::Error::from)?;
            let projected = FeatureSet::from_f64(
                format!("{}.pca{}", set.name(), model.k()),
                &z,
                set.labels().to_vec(),
            )
            .map_err(anyhow::Error::from)?;
            write_fset_file(&projected, &out)
                .with_context(|| format!("writing {}", out.display()))?;
            let mut manifest = RunManifest::new("pca transform");
            manifest.input(&model_path).context("hashing model")?;
            manifest.input(&input).context("hashing input")?;
            finish(io, manifest, started, Some(&out))
        }
        Command::Train(args) => {
            let train_path: PathBuf = r.required(args.train, "train")?;
            let val_path: PathBuf = r.required(args.val, "val")?;
            let out: PathBuf = r.required(args.out, "out")?;
            let train_set = read_fset_file(&train_path)
                .with_context(|| format!("reading {}", train_path.display()))?;
            let val_set = read_fset_file(&val_path)
                .with_context(|| format!("reading {}", val_path.display()))?;
            let cfg = r.fcnn(&args.fcnn, train_set.d())?;
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let outcome = fcnn::train(&cfg, &train_set, &val_set).map_err(anyhow::Error::from)?;
            fcnn::write_model_file(&outcome.model, &out)
                .with_context(|| format!("writing {}", out.display()))?;
            let _ = writeln!(
                io.out,
                "best validation accuracy {:.4} at epoch {} (stopped at {}{})",
                outcome.best_val_accuracy,
                outcome.best_epoch,
                outcome.stop_epoch,
                if outcome.stopped_early { ", early" } else { "" }
            );
            let mut manifest = RunManifest::new("train");
            record_fcnn(&mut manifest, &cfg);
            manifest.input(&train_path).context("hashing input")?;
            manifest.input(&val_path).context("hashing input")?;
            manifest.param(
                "best_val_accuracy",
                format!("{:.4}", outcome.best_val_accuracy),
            );
            finish(io, manifest, started, Some(&out))
        }
        Command::Evaluate(args) => {
            let model_path: PathBuf = r.required(args.model, "model")?;
            let features: PathBuf = r.required(args.features, "features")?;
            let out: PathBuf = r.required(args.out, "out")?;
            let format: ReportFormat = r
                .parsed(args.format, "format")?
                .unwrap_or(ReportFormat::Csv);
            let cap = r.or(args.error_cap, "error-cap", DEFAULT_ERROR_CAP)?;
            let model = fcnn::read_model_file(&model_path)
                .with_context(|| format!("reading {}", model_path.display()))?;
            let set = read_fset_file(&features)
                .with_context(|| format!("reading {}", features.display()))?;
            let probs = model
                .predict_proba(set.to_f64().view())
                .map_err(anyhow::Error::from)?;
            let mut report =
                evaluate_with_cap(probs.view(), set.labels(), cap).map_err(anyhow::Error::from)?;
            report
                .metadata
                .insert("model".into(), model_path.display().to_string());
            report
                .metadata
                .insert("features".into(), features.display().to_string());
            fs::write(&out, render_report(&report, format))
                .with_context(|| format!("writing {}", out.display()))?;
            let _ = writeln!(
                io.out,
                "accuracy {:.4}, top-3 accuracy {:.4}",
                report.accuracy, report.top3_accuracy
            );
            let mut manifest = RunManifest::new("evaluate");
            manifest.param("error-cap", cap);
            manifest.input(&model_path).context("hashing model")?;
            manifest.input(&features).context("hashing features")?;
            finish(io, manifest, started, Some(&out))
        }
        Command::Ensemble(EnsembleCmd::Run(args)) => {
            let spec_path: PathBuf = r.required(args.spec, "spec")?;
            let spec_cfg =
                KeyValueConfig::load(&spec_path).map_err(|e| Failure::Usage(e.to_string()))?;
            let base = spec_path.parent().map(Path::to_path_buf);
            let mut spec = EnsembleSpec::from_config(&spec_cfg, base.as_deref())
                .map_err(|e| Failure::Usage(e.to_string()))?;
            if let Some(dir) = r.opt(args.data_dir, "data-dir")? {
                spec.data.data_dir = Some(dir);
            } else if spec.data.data_dir.is_none() {
                spec.data.data_dir = r.env.get(DATA_ENV).map(PathBuf::from);
            }
            let mut manifest = RunManifest::new("ensemble run");
            manifest.input(&spec_path).context("hashing spec")?;
            run_spec(spec, manifest, args.output, r, io, started)
        }
        Command::Reproduce(args) => {
            let experiment: Experiment = r
                .parsed(args.experiment, "experiment")?
                .ok_or_else(|| Failure::Usage("missing required --experiment".into()))?;
            let scale: Scale = r.parsed(args.scale, "scale")?.unwrap_or(Scale::Desk);
            let data_dir = r.data_dir(args.data_dir)?;
            let features_dir: Option<PathBuf> = r.opt(args.features_dir, "features-dir")?;
            let mut spec =
                experiment_spec(experiment, scale, Some(data_dir), features_dir.as_deref());
            if let Some(v) = r.opt(args.validation, "validation")? {
                spec.validation =
                    parse_validation(&v).map_err(|e| Failure::Usage(e.to_string()))?;
            }
            if let Some(v) = r.opt::<String>(args.pca_fit_split, "pca-fit-split")? {
                spec.pca_fit_split = match v.as_str() {
                    "train" => crate::ensemble::PcaFitSplit::Train,
                    "train+test" => crate::ensemble::PcaFitSplit::TrainAndTest,
                    other => return Err(Failure::Usage(format!("bad --pca-fit-split '{other}'"))),
                };
            }
            spec.fcnn.seed = r.or(args.seed, "seed", spec.fcnn.seed)?;
            spec.fcnn.max_epochs = r.or(args.max_epochs, "max-epochs", spec.fcnn.max_epochs)?;
            if spec.validation == crate::ensemble::ValidationSource::Test {
                log::warn!("early stopping is scored on the test split, as in the original protocol; use --validation holdout:0.1 for an unbiased estimate");
            }
            let mut manifest = RunManifest::new("reproduce");
            manifest.param("experiment", format!("{experiment:?}").to_lowercase());
            manifest.param("scale", format!("{scale:?}").to_lowercase());
            run_spec(spec, manifest, args.output, r, io, started)
        }
    }
}

fn record_fcnn(manifest: &mut RunManifest, cfg: &FcnnConfig) {
    let hidden: Vec<String> = cfg.hidden.iter().map(usize::to_string).collect();
    manifest
        .param("input_dim", cfg.input_dim)
        .param("hidden", hidden.join(","))
        .param("dropout", cfg.dropout_rate)
        .param("lr", cfg.learning_rate)
        .param("batch", cfg.batch_size)
        .param("max-epochs", cfg.max_epochs)
        .param("patience", cfg.patience)
        .param("min-delta", cfg.min_delta)
        .seed("fcnn", cfg.seed);
}

fn run_spec(
    spec: EnsembleSpec,
    mut manifest: RunManifest,
    output: ReportOutput,
    r: &Resolver<'_>,
    io: &mut Io<'_>,
    started: Instant,
) -> Result<(), Failure> {
    let format: ReportFormat = r
        .parsed(output.format, "format")?
        .unwrap_or(ReportFormat::Text);
    let out: Option<PathBuf> = r.opt(output.out, "out")?;
    let model_out: Option<PathBuf> = r.opt(output.model_out, "model-out")?;
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if spec.needs_images() && spec.data.data_dir.is_none() {
        return Err(Failure::Usage(format!(
            "dataset directory not given (--data-dir or {DATA_ENV})"
        )));
    }
    for (k, v) in spec.describe() {
        manifest.param(k, v);
    }
    manifest
        .seed("fcnn", spec.fcnn.seed)
        .seed("subset", spec.data.subset_seed);
    if let Some(dir) = &spec.data.data_dir {
        if spec.needs_images() {
            for split in [Split::Train, Split::Test] {
                for p in split.paths(dir) {
                    manifest
                        .input(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                }
            }
        }
    }
    for m in &spec.members {
        if let crate::ensemble::MemberSource::File(t) = m {
            for split in [Split::Train, Split::Test] {
                let p = crate::ensemble::MemberSource::path_for(t, split);
                manifest
                    .input(&p)
                    .with_context(|| format!("reading {}", p.display()))?;
            }
        }
    }
    let run: EnsembleRun = run_ensemble(&spec).map_err(anyhow::Error::from)?;
    let rendered = render_report(&run.report, format);
    manifest.param("accuracy", format!("{:.4}", run.report.accuracy));
    match &out {
        Some(path) => {
            fs::write(path, &rendered).with_context(|| format!("writing {}", path.display()))?;
            let _ = writeln!(
                io.out,
                "accuracy {:.4}, top-3 accuracy {:.4} ({} features{})",
                run.report.accuracy,
                run.report.top3_accuracy,
                run.fused_dim,
                run.explained_variance
                    .map(|e| format!(", {e:.4} explained variance"))
                    .unwrap_or_default()
            );
        }
        None => {
            let _ = io.out.write_all(&rendered);
        }
    }
    if let Some(path) = &model_out {
        fcnn::write_model_file(&run.outcome.model, path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let primary = out.as_deref().or(model_out.as_deref());
    finish(io, manifest, started, primary)
}
