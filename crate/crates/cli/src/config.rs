//! Experiment configuration files (TOML) with `include` support.
//!
//! A file may list other files under `include`; they are loaded first and
//! the including file's keys override theirs (tables merge key by key,
//! everything else is replaced). Relative paths inside `[corpus]` and
//! `output` are resolved against the directory of the top-level file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use mmevent_core::classifiers::{
    gamma_grid, ClassifierConfig, ClassifierKind, C_GRID, DEFAULT_CALIBRATION_FOLDS,
    DEFAULT_TREE_DEPTH, ROUNDS_GRID,
};
use mmevent_core::corpus::MetadataFormat;
use mmevent_core::encoding::{VladNormalization, DEFAULT_VARIANCE_TARGET};
use mmevent_core::evaluation::{ReportFormat, DEFAULT_FOLDS};
use mmevent_core::fusion::{FusionStrategy, Task};
use mmevent_core::visual::DEFAULT_IMAGE_SIZE;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::config_error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_task")]
    pub task: Task,
    pub corpus: CorpusConfig,
    /// Declared feature order.
    pub features: Vec<String>,
    /// Parameters per feature name.
    #[serde(default)]
    pub feature: BTreeMap<String, FeatureParams>,
    #[serde(default)]
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub fusion: FusionSpec,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_task() -> Task {
    Task::Type
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub metadata: PathBuf,
    #[serde(default)]
    pub format: Option<String>,
    /// Optional `id,split` table overriding the metadata's split column.
    #[serde(default)]
    pub splits: Option<PathBuf>,
    /// Base directory for relative image paths; defaults to the metadata's directory.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
}

fn default_image_size() -> usize {
    DEFAULT_IMAGE_SIZE
}

impl CorpusConfig {
    pub fn metadata_format(&self) -> Result<MetadataFormat> {
        match &self.format {
            Some(f) => f.parse().map_err(config_error),
            None => Ok(MetadataFormat::from_path(&self.metadata)),
        }
    }

    pub fn image_root(&self) -> PathBuf {
        self.image_root.clone().unwrap_or_else(|| {
            self.metadata
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    Tfidf,
    Topics,
    Gist,
    PcaGist,
    Bow,
    Vlad,
}

impl Extractor {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "tfidf" => Extractor::Tfidf,
            "topics" => Extractor::Topics,
            "gist" => Extractor::Gist,
            "pca_gist" => Extractor::PcaGist,
            "bow" => Extractor::Bow,
            "vlad" => Extractor::Vlad,
            _ => return None,
        })
    }

    pub fn is_visual(self) -> bool {
        !matches!(self, Extractor::Tfidf | Extractor::Topics)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorMode {
    Sparse,
    Dense,
}

/// Raw per-feature table; which keys apply depends on the extractor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureParams {
    pub extractor: Option<Extractor>,
    pub terms: Option<usize>,
    pub topics: Option<usize>,
    pub iterations: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub blocks: Option<usize>,
    pub variance: Option<f64>,
    pub k: Option<usize>,
    pub descriptors: Option<DescriptorMode>,
    pub step: Option<usize>,
    pub patch: Option<usize>,
    pub images_per_class: Option<usize>,
    pub max_descriptors_per_image: Option<usize>,
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
    pub intra_normalization: Option<bool>,
}

/// A feature with every parameter filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "extractor", rename_all = "snake_case")]
pub enum ResolvedFeature {
    Tfidf {
        terms: usize,
    },
    Topics {
        topics: usize,
        iterations: usize,
        alpha: Option<f64>,
        beta: f64,
    },
    Gist {
        blocks: usize,
    },
    PcaGist {
        blocks: usize,
        variance: f64,
    },
    Bow {
        k: usize,
        descriptors: LocalParams,
        sample: SampleParams,
    },
    Vlad {
        k: usize,
        descriptors: LocalParams,
        sample: SampleParams,
        normalization: VladNormalization,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalParams {
    pub mode: DescriptorMode,
    pub step: usize,
    pub patch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleParams {
    pub images_per_class: usize,
    pub max_descriptors_per_image: Option<usize>,
    pub restarts: usize,
    pub max_iter: usize,
}

impl ResolvedFeature {
    pub fn extractor(&self) -> Extractor {
        match self {
            ResolvedFeature::Tfidf { .. } => Extractor::Tfidf,
            ResolvedFeature::Topics { .. } => Extractor::Topics,
            ResolvedFeature::Gist { .. } => Extractor::Gist,
            ResolvedFeature::PcaGist { .. } => Extractor::PcaGist,
            ResolvedFeature::Bow { .. } => Extractor::Bow,
            ResolvedFeature::Vlad { .. } => Extractor::Vlad,
        }
    }

    pub fn local(&self) -> Option<&LocalParams> {
        match self {
            ResolvedFeature::Bow { descriptors, .. }
            | ResolvedFeature::Vlad { descriptors, .. } => Some(descriptors),
            _ => None,
        }
    }
}

impl FeatureParams {
    pub fn resolve(&self, name: &str) -> Result<ResolvedFeature> {
        let extractor = self
            .extractor
            .or_else(|| Extractor::from_name(name))
            .ok_or_else(|| {
                config_error(format!(
                    "feature `{name}` needs an `extractor` (tfidf, topics, gist, pca_gist, bow, vlad)"
                ))
            })?;
        let positive = |v: usize, key: &str| {
            if v == 0 {
                Err(config_error(format!(
                    "feature `{name}`: `{key}` must be >= 1"
                )))
            } else {
                Ok(v)
            }
        };
        let local = || -> Result<(LocalParams, SampleParams)> {
            Ok((
                LocalParams {
                    mode: self.descriptors.unwrap_or(DescriptorMode::Sparse),
                    step: positive(self.step.unwrap_or(8), "step")?,
                    patch: positive(self.patch.unwrap_or(16), "patch")?,
                },
                SampleParams {
                    images_per_class: positive(
                        self.images_per_class.unwrap_or(50),
                        "images_per_class",
                    )?,
                    max_descriptors_per_image: self.max_descriptors_per_image,
                    restarts: positive(self.restarts.unwrap_or(3), "restarts")?,
                    max_iter: positive(self.max_iter.unwrap_or(100), "max_iter")?,
                },
            ))
        };
        Ok(match extractor {
            Extractor::Tfidf => ResolvedFeature::Tfidf {
                terms: positive(self.terms.unwrap_or(5000), "terms")?,
            },
            Extractor::Topics => {
                let topics = self.topics.unwrap_or(100);
                if topics < 2 {
                    return Err(config_error(format!(
                        "feature `{name}`: topics must be >= 2"
                    )));
                }
                ResolvedFeature::Topics {
                    topics,
                    iterations: positive(self.iterations.unwrap_or(1000), "iterations")?,
                    alpha: self.alpha,
                    beta: self.beta.unwrap_or(0.01),
                }
            }
            Extractor::Gist => ResolvedFeature::Gist {
                blocks: positive(self.blocks.unwrap_or(4), "blocks")?,
            },
            Extractor::PcaGist => ResolvedFeature::PcaGist {
                blocks: positive(self.blocks.unwrap_or(4), "blocks")?,
                variance: self.variance.unwrap_or(DEFAULT_VARIANCE_TARGET),
            },
            Extractor::Bow => {
                let (descriptors, sample) = local()?;
                ResolvedFeature::Bow {
                    k: positive(self.k.unwrap_or(1000), "k")?,
                    descriptors,
                    sample,
                }
            }
            Extractor::Vlad => {
                let (descriptors, sample) = local()?;
                ResolvedFeature::Vlad {
                    k: positive(self.k.unwrap_or(32), "k")?,
                    descriptors,
                    sample,
                    normalization: if self.intra_normalization.unwrap_or(true) {
                        VladNormalization::IntraL2
                    } else {
                        VladNormalization::None
                    },
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default)]
    pub rounds: Option<Vec<usize>>,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default)]
    pub calibration_folds: Option<usize>,
}

fn default_kind() -> String {
    "linear_svm".into()
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            c: None,
            gamma: None,
            rounds: None,
            max_depth: None,
            calibration_folds: None,
        }
    }
}

impl ClassifierSpec {
    /// Every hyperparameter combination, smallest models first.
    pub fn grid(&self, seed: u64) -> Result<Vec<ClassifierConfig>> {
        let cs = self.c.clone().unwrap_or_else(|| C_GRID.to_vec());
        let folds = self.calibration_folds.unwrap_or(DEFAULT_CALIBRATION_FOLDS);
        let kinds: Vec<ClassifierKind> = match self.kind.as_str() {
            "linear_svm" => cs
                .iter()
                .map(|&c| ClassifierKind::LinearSvm { c })
                .collect(),
            "rbf_svm" => {
                let gammas = self.gamma.clone().unwrap_or_else(gamma_grid);
                cs.iter()
                    .flat_map(|&c| {
                        gammas
                            .iter()
                            .map(move |&gamma| ClassifierKind::RbfSvm { c, gamma })
                    })
                    .collect()
            }
            "rusboost" => {
                let depth = self.max_depth.unwrap_or(DEFAULT_TREE_DEPTH);
                self.rounds
                    .clone()
                    .unwrap_or_else(|| ROUNDS_GRID.to_vec())
                    .into_iter()
                    .map(|rounds| ClassifierKind::Rusboost {
                        rounds,
                        max_depth: depth,
                    })
                    .collect()
            }
            other => {
                return Err(config_error(format!(
                    "unknown classifier kind `{other}` (linear_svm, rbf_svm, rusboost)"
                )))
            }
        };
        if kinds.is_empty() {
            return Err(config_error("classifier grid is empty"));
        }
        Ok(kinds
            .into_iter()
            .map(|k| {
                ClassifierConfig::new(k)
                    .with_seed(seed)
                    .with_calibration_folds(folds)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    #[serde(default = "default_strategy")]
    pub strategy: FusionStrategy,
    #[serde(default)]
    pub groups: Vec<Vec<String>>,
    #[serde(default)]
    pub meta: Option<ClassifierKind>,
    #[serde(default = "default_folds")]
    pub meta_folds: usize,
}

fn default_strategy() -> FusionStrategy {
    FusionStrategy::Early
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

impl Default for FusionSpec {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            groups: Vec::new(),
            meta: None,
            meta_folds: default_folds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Run cross-validation even for a single grid point.
    #[serde(default = "default_true")]
    pub cross_validate: bool,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
    #[serde(default = "default_baseline")]
    pub baseline: BaselineMode,
    #[serde(default = "default_draws")]
    pub baseline_draws: usize,
}

fn default_true() -> bool {
    true
}

fn default_formats() -> Vec<ReportFormat> {
    ReportFormat::ALL.to_vec()
}

fn default_baseline() -> BaselineMode {
    BaselineMode::Analytic
}

fn default_draws() -> usize {
    100_000
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self {
            folds: default_folds(),
            cross_validate: true,
            formats: default_formats(),
            baseline: default_baseline(),
            baseline_draws: default_draws(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn load_value(path: &Path, stack: &mut Vec<PathBuf>) -> Result<Value> {
    let canonical = path
        .canonicalize()
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    if stack.contains(&canonical) {
        return Err(config_error(format!(
            "config include cycle through {}",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: Value = text
        .parse::<toml::Table>()
        .map(Value::Table)
        .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let includes = match value.as_table_mut().and_then(|t| t.remove("include")) {
        None => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err(config_error(format!(
                    "{}: `include` entries must be strings",
                    path.display()
                ))),
            })
            .collect::<Result<_>>()?,
        Some(_) => {
            return Err(config_error(format!(
                "{}: `include` must be a string or an array of strings",
                path.display()
            )))
        }
    };
    stack.push(canonical);
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut merged = Value::Table(toml::Table::new());
    for inc in includes {
        let base = load_value(&dir.join(inc), stack)?;
        merge(&mut merged, base);
    }
    merge(&mut merged, value);
    stack.pop();
    Ok(merged)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let value = load_value(path, &mut Vec::new())?;
        let mut cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| config_error(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.corpus.metadata);
        if let Some(p) = self.corpus.splits.as_mut() {
            fix(p);
        }
        if let Some(p) = self.corpus.image_root.as_mut() {
            fix(p);
        }
        fix(&mut self.output);
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(config_error("`features` lists no features"));
        }
        for (i, f) in self.features.iter().enumerate() {
            if self.features[..i].contains(f) {
                return Err(config_error(format!("feature `{f}` listed twice")));
            }
            self.resolved_feature(f)?;
        }
        // tables for unlisted features are allowed so one base file can
        // describe every feature a family of experiments draws from
        for name in self.feature.keys() {
            self.resolved_feature(name)?;
        }
        if self.corpus.image_size < 16 {
            return Err(config_error("corpus.image_size must be at least 16"));
        }
        if self.evaluation.folds < 2 {
            return Err(config_error("evaluation.folds must be at least 2"));
        }
        self.corpus.metadata_format()?;
        self.classifier.grid(self.seed)?;
        Ok(())
    }

    pub fn resolved_feature(&self, name: &str) -> Result<ResolvedFeature> {
        self.feature
            .get(name)
            .cloned()
            .unwrap_or_default()
            .resolve(name)
    }

    pub fn meta_classifier(&self) -> ClassifierConfig {
        let kind = self
            .fusion
            .meta
            .clone()
            .unwrap_or(ClassifierKind::RbfSvm { c: 1.0, gamma: 1.0 });
        ClassifierConfig::new(kind)
    }
}
