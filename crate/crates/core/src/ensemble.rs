//! Feature-level ensembles: load or extract member feature sets, standardize
//! on training statistics, concatenate, optionally project onto the leading
//! principal components, then train and evaluate the classifier head.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{parse_bool, ConfigError, KeyValueConfig};
use crate::dataset::{
    augment_with_hflip, load_split, subset_indices_per_class, ClassLabel, DatasetError,
    LabeledImageSet, Split,
};
use crate::eval::{evaluate_with_cap, EvalError, EvalReport, DEFAULT_ERROR_CAP};
use crate::fcnn::{train_matrices, FcnnConfig, FcnnError, TrainOutcome};
use crate::features::{
    concat_feature_sets, read_fset_file, FeatureError, FeatureSet, FsetError, StandardizationStats,
};
use crate::hog::{hog_feature_set, HogConfig, HogError};
use crate::pca::{pca_fit, PcaError, PcaModel};
use crate::pixel::pixel_feature_set;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{path}: {source}")]
    Fset { path: PathBuf, source: FsetError },
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Fcnn(#[from] FcnnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Where one member's features come from.
#[derive(Clone, Debug, PartialEq)]
pub enum MemberSource {
    Hog(HogConfig),
    Pixel,
    /// FSET path; `{split}` is replaced by `train` or `test`.
    File(String),
}

impl MemberSource {
    pub fn parse(s: &str, hog: HogConfig) -> Self {
        match s.trim() {
            "hog" => MemberSource::Hog(hog),
            "pixel" => MemberSource::Pixel,
            other => MemberSource::File(other.to_owned()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MemberSource::Hog(_) => "hog".into(),
            MemberSource::Pixel => "pixel".into(),
            MemberSource::File(t) => t.clone(),
        }
    }

    pub fn path_for(template: &str, split: Split) -> PathBuf {
        PathBuf::from(template.replace("{split}", split.as_str()))
    }

    fn needs_images(&self) -> bool {
        !matches!(self, MemberSource::File(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValidationSource {
    /// Score early stopping on the test split.
    Test,
    /// Hold out a seeded random fraction of the training rows.
    Holdout(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcaFitSplit {
    Train,
    /// Fit on training and test rows together.
    TrainAndTest,
}

/// Which rows of the dataset feed the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPlan {
    pub data_dir: Option<PathBuf>,
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub subset_seed: u64,
    /// Append horizontally flipped training images.
    pub augment: bool,
}

impl Default for DataPlan {
    fn default() -> Self {
        DataPlan {
            data_dir: None,
            train_per_class: None,
            test_per_class: None,
            subset_seed: 2020,
            augment: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub members: Vec<MemberSource>,
    pub pca_k: Option<usize>,
    pub pca_fit_split: PcaFitSplit,
    pub standardize: bool,
    /// `input_dim` is filled in from the fused features.
    pub fcnn: FcnnConfig,
    pub validation: ValidationSource,
    pub error_cap: usize,
    pub data: DataPlan,
}

impl EnsembleSpec {
    pub fn new(members: Vec<MemberSource>) -> Self {
        EnsembleSpec {
            members,
            pca_k: None,
            pca_fit_split: PcaFitSplit::Train,
            standardize: true,
            fcnn: FcnnConfig::new(1),
            validation: ValidationSource::Test,
            error_cap: DEFAULT_ERROR_CAP,
            data: DataPlan::default(),
        }
    }

    pub const KEYS: &'static [&'static str] = &[
        "member",
        "pca_k",
        "pca_fit_split",
        "standardize",
        "hidden",
        "dropout",
        "lr",
        "batch",
        "max_epochs",
        "patience",
        "min_delta",
        "seed",
        "validation",
        "error_cap",
        "data_dir",
        "train_per_class",
        "test_per_class",
        "subset_seed",
        "augment",
        "hog_orientations",
        "hog_cell",
        "hog_block",
        "hog_stride",
        "hog_clip",
    ];

    /// Builds a spec from `key = value` entries. Relative member paths resolve against `base`.
    pub fn from_config(cfg: &KeyValueConfig, base: Option<&Path>) -> Result<Self, EnsembleError> {
        cfg.ensure_known(Self::KEYS)?;
        let defaults = HogConfig::default();
        let hog = HogConfig {
            orientations: cfg
                .get_parsed("hog_orientations")?
                .unwrap_or(defaults.orientations),
            cell_size: cfg.get_parsed("hog_cell")?.unwrap_or(defaults.cell_size),
            block_size: cfg.get_parsed("hog_block")?.unwrap_or(defaults.block_size),
            block_stride: cfg
                .get_parsed("hog_stride")?
                .unwrap_or(defaults.block_stride),
            clip: cfg.get_parsed("hog_clip")?.unwrap_or(defaults.clip),
        };
        let members = cfg
            .get_all("member")
            .into_iter()
            .map(|m| match MemberSource::parse(m, hog) {
                MemberSource::File(t) => match base {
                    Some(b) if Path::new(&t).is_relative() => {
                        MemberSource::File(b.join(&t).to_string_lossy().into_owned())
                    }
                    _ => MemberSource::File(t),
                },
                other => other,
            })
            .collect();
        let mut spec = EnsembleSpec::new(members);
        spec.pca_k = cfg.get_parsed("pca_k")?;
        if let Some(v) = cfg.get("pca_fit_split") {
            spec.pca_fit_split = match v {
                "train" => PcaFitSplit::Train,
                "train+test" => PcaFitSplit::TrainAndTest,
                _ => return Err(EnsembleError::Spec(format!("pca_fit_split '{v}'"))),
            };
        }
        if let Some(v) = cfg.get("standardize") {
            spec.standardize =
                parse_bool(v).ok_or_else(|| EnsembleError::Spec(format!("standardize '{v}'")))?;
        }
        if let Some(v) = cfg.get("augment") {
            spec.data.augment =
                parse_bool(v).ok_or_else(|| EnsembleError::Spec(format!("augment '{v}'")))?;
        }
        if let Some(v) = cfg.get("hidden") {
            spec.fcnn.hidden = parse_widths(v)?;
        }
        let f = &mut spec.fcnn;
        f.dropout_rate = cfg.get_parsed("dropout")?.unwrap_or(f.dropout_rate);
        f.learning_rate = cfg.get_parsed("lr")?.unwrap_or(f.learning_rate);
        f.batch_size = cfg.get_parsed("batch")?.unwrap_or(f.batch_size);
        f.max_epochs = cfg.get_parsed("max_epochs")?.unwrap_or(f.max_epochs);
        f.patience = cfg.get_parsed("patience")?.unwrap_or(f.patience);
        f.min_delta = cfg.get_parsed("min_delta")?.unwrap_or(f.min_delta);
        f.seed = cfg.get_parsed("seed")?.unwrap_or(f.seed);
        if let Some(v) = cfg.get("validation") {
            spec.validation = parse_validation(v)?;
        }
        spec.error_cap = cfg.get_parsed("error_cap")?.unwrap_or(spec.error_cap);
        spec.data.data_dir = cfg.get("data_dir").map(PathBuf::from);
        spec.data.train_per_class = cfg.get_parsed("train_per_class")?;
        spec.data.test_per_class = cfg.get_parsed("test_per_class")?;
        spec.data.subset_seed = cfg
            .get_parsed("subset_seed")?
            .unwrap_or(spec.data.subset_seed);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.members.is_empty() {
            return Err(EnsembleError::Spec(
                "at least one member is required".into(),
            ));
        }
        if self.pca_k == Some(0) {
            return Err(EnsembleError::Spec("pca_k must be >= 1".into()));
        }
        if let ValidationSource::Holdout(f) = self.validation {
            if !(f > 0.0 && f < 1.0) {
                return Err(EnsembleError::Spec(format!(
                    "holdout fraction {f} not in (0, 1)"
                )));
            }
        }
        for m in &self.members {
            if let MemberSource::Hog(cfg) = m {
                cfg.validate()?;
            }
        }
        Ok(())
    }

    pub fn needs_images(&self) -> bool {
        self.members.iter().any(MemberSource::needs_images)
    }

    /// Flat description of every setting, for reports and manifests.
    pub fn describe(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let members: Vec<String> = self.members.iter().map(MemberSource::describe).collect();
        m.insert("members".into(), members.join(","));
        m.insert(
            "pca_k".into(),
            self.pca_k.map_or("none".into(), |k| k.to_string()),
        );
        m.insert(
            "pca_fit_split".into(),
            match self.pca_fit_split {
                PcaFitSplit::Train => "train".into(),
                PcaFitSplit::TrainAndTest => "train+test".into(),
            },
        );
        m.insert("standardize".into(), self.standardize.to_string());
        let hidden: Vec<String> = self.fcnn.hidden.iter().map(usize::to_string).collect();
        m.insert("hidden".into(), hidden.join(","));
        m.insert("dropout".into(), self.fcnn.dropout_rate.to_string());
        m.insert("lr".into(), self.fcnn.learning_rate.to_string());
        m.insert("batch".into(), self.fcnn.batch_size.to_string());
        m.insert("max_epochs".into(), self.fcnn.max_epochs.to_string());
        m.insert("patience".into(), self.fcnn.patience.to_string());
        m.insert("min_delta".into(), self.fcnn.min_delta.to_string());
        m.insert("seed".into(), self.fcnn.seed.to_string());
        m.insert(
            "validation".into(),
            match self.validation {
                ValidationSource::Test => "test".into(),
                ValidationSource::Holdout(f) => format!("holdout:{f}"),
            },
        );
        m.insert("augment".into(), self.data.augment.to_string());
        m.insert("subset_seed".into(), self.data.subset_seed.to_string());
        let per = |v: Option<usize>| v.map_or("all".into(), |v| v.to_string());
        m.insert("train_per_class".into(), per(self.data.train_per_class));
        m.insert("test_per_class".into(), per(self.data.test_per_class));
        for member in &self.members {
            if let MemberSource::Hog(h) = member {
                m.insert(
                    "hog".into(),
                    format!(
                        "orientations={} cell={} block={} stride={} clip={}",
                        h.orientations, h.cell_size, h.block_size, h.block_stride, h.clip
                    ),
                );
            }
        }
        m
    }
}

fn parse_widths(v: &str) -> Result<Vec<usize>, EnsembleError> {
    v.split(',')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|_| EnsembleError::Spec(format!("hidden width '{w}'")))
        })
        .collect()
}

pub fn parse_validation(v: &str) -> Result<ValidationSource, EnsembleError> {
    if v == "test" {
        return Ok(ValidationSource::Test);
    }
    v.strip_prefix("holdout:")
        .and_then(|f| f.parse().ok())
        .map(ValidationSource::Holdout)
        .ok_or_else(|| {
            EnsembleError::Spec(format!(
                "validation '{v}' (expected test or holdout:<fraction>)"
            ))
        })
}

/// Fused design matrices ready for the classifier.
#[derive(Clone, Debug)]
pub struct FusedFeatures {
    pub name: String,
    pub train_x: Array2<f64>,
    pub train_labels: Vec<ClassLabel>,
    /// Transformed copies of the extra splits, in the order given.
    pub others: Vec<(Array2<f64>, Vec<ClassLabel>)>,
    pub stats: Option<StandardizationStats>,
    pub pca: Option<PcaModel>,
}

/// Standardize (train statistics), concatenate, and optionally PCA-project.
pub fn fuse_features(
    train_members: &[FeatureSet],
    other_members: &[Vec<FeatureSet>],
    standardize: bool,
    pca_k: Option<usize>,
    pca_fit_split: PcaFitSplit,
) -> Result<FusedFeatures, EnsembleError> {
    let train = concat_feature_sets(train_members)?;
    let others = other_members
        .iter()
        .map(|sets| {
            let set = concat_feature_sets(sets)?;
            if set.d() != train.d() {
                return Err(FeatureError::Dimension {
                    expected: train.d(),
                    found: set.d(),
                });
            }
            Ok(set)
        })
        .collect::<Result<Vec<_>, _>>()?;
    // column-wise z-scoring commutes with concatenation
    let stats = if standardize {
        Some(StandardizationStats::fit(&train)?)
    } else {
        None
    };
    let prepare = |set: &FeatureSet| -> Array2<f64> {
        let mut x = set.to_f64();
        if let Some(stats) = &stats {
            for mut row in x.rows_mut() {
                for ((v, &m), &s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
                    *v -= m;
                    if s >= crate::features::SIGMA_FLOOR {
                        *v /= s;
                    }
                }
            }
        }
        x
    };
    let mut train_x = prepare(&train);
    let mut others_x: Vec<Array2<f64>> = others.iter().map(prepare).collect();
    let pca = match pca_k {
        None => None,
        Some(k) => {
            let model = match pca_fit_split {
                PcaFitSplit::Train => pca_fit(train_x.view(), k)?,
                PcaFitSplit::TrainAndTest => {
                    let mut views = vec![train_x.view()];
                    views.extend(others_x.iter().map(|o| o.view()));
                    let all = concatenate(Axis(0), &views).expect("equal widths");
                    pca_fit(all.view(), k)?
                }
            };
            train_x = model.transform(train_x.view())?;
            for o in others_x.iter_mut() {
                *o = model.transform(o.view())?;
            }
            Some(model)
        }
    };
    Ok(FusedFeatures {
        name: train.name().to_owned(),
        train_x,
        train_labels: train.labels().to_vec(),
        others: others_x
            .into_iter()
            .zip(others.iter().map(|o| o.labels().to_vec()))
            .collect(),
        stats,
        pca,
    })
}

#[derive(Clone, Debug)]
pub struct EnsembleRun {
    pub outcome: TrainOutcome,
    pub report: EvalReport,
    pub fused_dim: usize,
    /// Cumulative explained-variance ratio of the kept components.
    pub explained_variance: Option<f64>,
    pub pca: Option<PcaModel>,
}

fn indices_of(labels: &[ClassLabel]) -> Vec<usize> {
    labels.iter().map(|l| l.index()).collect()
}

/// Seeded split of `0..n` into (kept, held out).
fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    let held = ((n as f64) * fraction).round() as usize;
    let mut val: Vec<usize> = order[..held].to_vec();
    let mut keep: Vec<usize> = order[held..].to_vec();
    val.sort_unstable();
    keep.sort_unstable();
    (keep, val)
}

/// Runs the pipeline on member feature sets that are already materialized.
pub fn run_on_features(
    spec: &EnsembleSpec,
    train_members: &[FeatureSet],
    test_members: &[FeatureSet],
) -> Result<EnsembleRun, EnsembleError> {
    spec.validate()?;
    let (fit_members, val_members) = match spec.validation {
        ValidationSource::Test => (train_members.to_vec(), None),
        ValidationSource::Holdout(fraction) => {
            let n = train_members.first().map_or(0, FeatureSet::n);
            let (keep, val) = holdout_split(n, fraction, spec.fcnn.seed);
            let pick = |idx: &[usize]| train_members.iter().map(|m| m.select(idx)).collect();
            (pick(&keep), Some(pick(&val)))
        }
    };
    let mut others = vec![test_members.to_vec()];
    if let Some(v) = val_members {
        others.push(v);
    }
    let fused = fuse_features(
        &fit_members,
        &others,
        spec.standardize,
        spec.pca_k,
        spec.pca_fit_split,
    )?;
    let (test_x, test_labels) = &fused.others[0];
    let (val_x, val_labels) = fused.others.get(1).unwrap_or(&fused.others[0]);
    let cfg = FcnnConfig {
        input_dim: fused.train_x.ncols(),
        ..spec.fcnn.clone()
    };
    let vy = indices_of(val_labels);
    let mut validator = |model: &crate::fcnn::FcnnModel, _epoch: usize| {
        model.accuracy(val_x.view(), &vy).unwrap_or(0.0)
    };
    let outcome = train_matrices(
        &cfg,
        fused.train_x.view(),
        &indices_of(&fused.train_labels),
        &mut validator,
    )?;
    let probs = outcome.model.predict_proba(test_x.view())?;
    let mut report = evaluate_with_cap(probs.view(), test_labels, spec.error_cap)?;
    let explained_variance = match &fused.pca {
        Some(p) => p.cumulative_explained_variance().ok(),
        None => None,
    };
    report.metadata.extend(spec.describe());
    report
        .metadata
        .insert("features".into(), fused.name.clone());
    report
        .metadata
        .insert("fused_dim".into(), cfg.input_dim.to_string());
    report
        .metadata
        .insert("train_rows".into(), fused.train_x.nrows().to_string());
    report
        .metadata
        .insert("best_epoch".into(), outcome.best_epoch.to_string());
    report
        .metadata
        .insert("stop_epoch".into(), outcome.stop_epoch.to_string());
    report
        .metadata
        .insert("stopped_early".into(), outcome.stopped_early.to_string());
    report.metadata.insert(
        "best_val_accuracy".into(),
        format!("{:.4}", outcome.best_val_accuracy),
    );
    if let Some(ev) = explained_variance {
        report
            .metadata
            .insert("explained_variance".into(), format!("{ev:.4}"));
    }
    Ok(EnsembleRun {
        fused_dim: cfg.input_dim,
        outcome,
        report,
        explained_variance,
        pca: fused.pca,
    })
}

/// Builds every member's features for one split.
pub fn materialize_members(
    members: &[MemberSource],
    images: Option<&LabeledImageSet>,
    split: Split,
) -> Result<Vec<FeatureSet>, EnsembleError> {
    members
        .iter()
        .map(|m| match m {
            MemberSource::Hog(cfg) => Ok(hog_feature_set(require(images)?, cfg)?),
            MemberSource::Pixel => Ok(pixel_feature_set(require(images)?)),
            MemberSource::File(template) => {
                let path = MemberSource::path_for(template, split);
                read_fset_file(&path).map_err(|source| EnsembleError::Fset { path, source })
            }
        })
        .collect()
}

fn require(images: Option<&LabeledImageSet>) -> Result<&LabeledImageSet, EnsembleError> {
    images.ok_or_else(|| EnsembleError::Spec("built-in members need image data (data_dir)".into()))
}

/// Member features for one split after subsetting and optional augmentation.
///
/// With augmentation, FSET members of the training split must already hold
/// `2N` rows (originals, then flips), matching the image ordering.
pub fn prepare_split(
    spec: &EnsembleSpec,
    images: Option<LabeledImageSet>,
    split: Split,
) -> Result<Vec<FeatureSet>, EnsembleError> {
    let file_members: Vec<(usize, FeatureSet)> = spec
        .members
        .iter()
        .enumerate()
        .filter(|(_, m)| matches!(m, MemberSource::File(_)))
        .map(|(i, m)| {
            Ok((
                i,
                materialize_members(std::slice::from_ref(m), None, split)?.remove(0),
            ))
        })
        .collect::<Result<_, EnsembleError>>()?;
    let augment = spec.data.augment && split == Split::Train;
    let per_class = match split {
        Split::Train => spec.data.train_per_class,
        Split::Test => spec.data.test_per_class,
    };

    // labels of the un-augmented split, used for subsetting
    let base_labels: Vec<ClassLabel> = match (&images, file_members.first()) {
        (Some(img), _) => img.labels().to_vec(),
        (None, Some((_, fs))) => {
            let n = if augment { fs.n() / 2 } else { fs.n() };
            fs.labels()[..n].to_vec()
        }
        (None, None) => Vec::new(),
    };
    let base_n = base_labels.len();
    let selection = per_class
        .map(|k| subset_indices_per_class(&base_labels, k, spec.data.subset_seed))
        .transpose()?;

    let images = images.map(|img| {
        let img = match &selection {
            Some(sel) => img.select(sel, format!("{}[subset]", img.provenance())),
            None => img,
        };
        if augment {
            augment_with_hflip(&img)
        } else {
            img
        }
    });
    let builtin: Vec<MemberSource> = spec
        .members
        .iter()
        .filter(|m| m.needs_images())
        .cloned()
        .collect();
    let mut built = materialize_members(&builtin, images.as_ref(), split)?.into_iter();

    let mut file_iter = file_members.into_iter().peekable();
    let mut out = Vec::with_capacity(spec.members.len());
    for (i, _) in spec.members.iter().enumerate() {
        match file_iter.peek() {
            Some((fi, _)) if *fi == i => {
                let (_, fs) = file_iter.next().unwrap();
                let expected = if augment { 2 * base_n } else { base_n };
                if fs.n() != expected && !base_labels.is_empty() {
                    return Err(EnsembleError::Feature(FeatureError::Alignment(format!(
                        "'{}' has {} rows for the {} split, expected {expected}",
                        fs.name(),
                        fs.n(),
                        split.as_str()
                    ))));
                }
                let fs = match &selection {
                    Some(sel) if augment => {
                        let mut rows = sel.clone();
                        rows.extend(sel.iter().map(|&s| s + base_n));
                        fs.select(&rows)
                    }
                    Some(sel) => fs.select(sel),
                    None => fs,
                };
                out.push(fs);
            }
            _ => out.push(built.next().expect("one built set per builtin member")),
        }
    }
    Ok(out)
}

/// Full pipeline from a spec: load data, build members, fuse, train, evaluate.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleRun, EnsembleError> {
    spec.validate()?;
    let load = |split: Split| -> Result<Option<LabeledImageSet>, EnsembleError> {
        if !spec.needs_images() {
            return Ok(None);
        }
        let dir = spec
            .data
            .data_dir
            .as_deref()
            .ok_or_else(|| EnsembleError::Spec("built-in members need data_dir".into()))?;
        Ok(Some(load_split(dir, split)?))
    };
    let train = prepare_split(spec, load(Split::Train)?, Split::Train)?;
    let test = prepare_split(spec, load(Split::Test)?, Split::Test)?;
    run_on_features(spec, &train, &test)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// TL-VGG + HOG + pixel, PCA.
    E1,
    /// TL-VGG + TL-Inception, direct concatenation.
    E2,
    /// All five sets, PCA.
    E3,
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "e1" => Ok(Experiment::E1),
            "e2" => Ok(Experiment::E2),
            "e3" => Ok(Experiment::E3),
            other => Err(format!(
                "unknown experiment '{other}' (expected e1, e2 or e3)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(format!("unknown scale '{other}' (expected desk or full)")),
        }
    }
}

pub const DESK_TRAIN_PER_CLASS: usize = 500;
pub const DESK_TEST_PER_CLASS: usize = 100;

/// The three fusion experiments.
///
/// Full scale reads `{features_dir}/{tlvgg,tlincep,cifarvgg}_{split}.fset`
/// and augments training with horizontal flips. Desk scale uses HOG and pixel
/// members only on a 500/100 per-class subset, without augmentation.
pub fn experiment_spec(
    experiment: Experiment,
    scale: Scale,
    data_dir: Option<PathBuf>,
    features_dir: Option<&Path>,
) -> EnsembleSpec {
    let hog = MemberSource::Hog(HogConfig::default());
    let file = |name: &str| {
        let dir = features_dir.unwrap_or_else(|| Path::new("."));
        MemberSource::File(
            dir.join(format!("{name}_{{split}}.fset"))
                .to_string_lossy()
                .into_owned(),
        )
    };
    let (members, pca_k) = match (scale, experiment) {
        (Scale::Full, Experiment::E1) => (vec![file("tlvgg"), hog, MemberSource::Pixel], Some(500)),
        (Scale::Full, Experiment::E2) => (vec![file("tlvgg"), file("tlincep")], None),
        (Scale::Full, Experiment::E3) => (
            vec![
                file("tlvgg"),
                hog,
                MemberSource::Pixel,
                file("cifarvgg"),
                file("tlincep"),
            ],
            Some(1000),
        ),
        (Scale::Desk, Experiment::E1) => (vec![hog, MemberSource::Pixel], Some(100)),
        (Scale::Desk, Experiment::E2) => (vec![hog, MemberSource::Pixel], None),
        (Scale::Desk, Experiment::E3) => (vec![hog, MemberSource::Pixel], Some(200)),
    };
    let mut spec = EnsembleSpec::new(members);
    spec.pca_k = pca_k;
    spec.data.data_dir = data_dir;
    match scale {
        Scale::Desk => {
            spec.data.train_per_class = Some(DESK_TRAIN_PER_CLASS);
            spec.data.test_per_class = Some(DESK_TEST_PER_CLASS);
        }
        Scale::Full => spec.data.augment = true,
    }
    spec
}
