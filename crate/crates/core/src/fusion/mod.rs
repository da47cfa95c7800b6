//! Early, additive-late and hierarchical-late fusion inside a two-stage
//! cascade: a binary relevance stage filters non-event records, then a
//! type stage assigns one of the eight event types.

mod bundle;
mod stage;

pub use bundle::{early_fuse, early_fuse_all, split_fused, FeatureBundle};
pub use stage::{
    additive_late_fuse, fold_model_seed, meta_features, out_of_fold_probabilities, OutOfFold,
    StageModel,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifiers::{ClassifierConfig, ClassifierError};
use crate::corpus::ClassLabel;
use crate::seed::derive_seed;
use stage::{train_stage, StageSpec};

pub const PIPELINE_FORMAT_VERSION: u32 = 1;
/// Class names of the relevance stage, in index order.
pub const RELEVANCE_CLASSES: [&str; 2] = ["non_event", "event"];

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("record `{record}` has no feature `{feature}`")]
    MissingFeature { record: String, feature: String },
    #[error("record `{record}`: fused dimension {got}, expected {expected}")]
    DimensionMismatch {
        record: String,
        expected: usize,
        got: usize,
    },
    #[error("probability vectors over {got} classes, expected {expected}")]
    ClassSetMismatch { expected: usize, got: usize },
    #[error("no classifier outputs to fuse")]
    NoClassifiers,
    #[error("{0}")]
    DegenerateLabels(String),
    #[error("{records} records but {labels} labels")]
    LengthMismatch { records: usize, labels: usize },
    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),
    #[error("pipeline has no trained {0} stage")]
    UntrainedStage(&'static str),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    Early,
    AdditiveLate,
    HierarchicalLate,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 3] = [
        FusionStrategy::Early,
        FusionStrategy::AdditiveLate,
        FusionStrategy::HierarchicalLate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionStrategy::Early => "early",
            FusionStrategy::AdditiveLate => "additive_late",
            FusionStrategy::HierarchicalLate => "hierarchical_late",
        }
    }
}

impl std::str::FromStr for FusionStrategy {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FusionStrategy::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim().replace('-', "_"))
            .ok_or_else(|| FusionError::InvalidPipeline(format!("unknown fusion strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Event versus non-event.
    Relevance,
    /// Nine-class labels through the relevance/type cascade.
    Type,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Relevance => "relevance",
            Task::Type => "type",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }
}

/// Everything needed to rebuild a pipeline from the same features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDescriptor {
    pub format_version: u32,
    pub task: Task,
    pub strategy: FusionStrategy,
    /// Declared feature order.
    pub features: Vec<FeatureSpec>,
    /// Feature groups with one lower-level classifier each. Empty means
    /// one group with everything for early fusion and one group per
    /// feature for the late strategies.
    #[serde(default)]
    pub groups: Vec<Vec<String>>,
    pub classifier: ClassifierConfig,
    /// Meta classifier for hierarchical late fusion.
    pub meta_classifier: ClassifierConfig,
    pub meta_folds: usize,
    pub seed: u64,
}

impl PipelineDescriptor {
    pub fn new(
        task: Task,
        strategy: FusionStrategy,
        features: Vec<FeatureSpec>,
        classifier: ClassifierConfig,
    ) -> Self {
        Self {
            format_version: PIPELINE_FORMAT_VERSION,
            task,
            strategy,
            features,
            groups: Vec::new(),
            classifier,
            meta_classifier: ClassifierConfig::rbf_svm(1.0, 1.0),
            meta_folds: 5,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn resolved_groups(&self) -> Vec<Vec<String>> {
        if !self.groups.is_empty() {
            return self.groups.clone();
        }
        match self.strategy {
            FusionStrategy::Early => vec![self.feature_names()],
            _ => self.feature_names().into_iter().map(|n| vec![n]).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::InvalidPipeline(m));
        if self.features.is_empty() {
            return bad("no features declared".into());
        }
        let names = self.feature_names();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return bad(format!("feature `{n}` declared twice"));
            }
        }
        let groups = self.resolved_groups();
        for g in &groups {
            if g.is_empty() {
                return bad("empty feature group".into());
            }
            if let Some(n) = g.iter().find(|n| !names.contains(n)) {
                return bad(format!("group uses undeclared feature `{n}`"));
            }
        }
        if self.strategy == FusionStrategy::Early && groups.len() != 1 {
            return bad("early fusion takes exactly one feature group".into());
        }
        if self.strategy != FusionStrategy::Early && self.classifier.calibration_folds < 2 {
            return bad(
                "late fusion needs calibrated probabilities (calibration_folds >= 2)".into(),
            );
        }
        if self.strategy == FusionStrategy::HierarchicalLate && self.meta_folds < 2 {
            return bad("hierarchical fusion needs meta_folds >= 2".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("descriptor serializes")
                .as_bytes(),
        )
    }

    fn stage_spec<'a>(&'a self, groups: &'a [Vec<String>], salt: u64) -> StageSpec<'a> {
        StageSpec {
            strategy: self.strategy,
            groups,
            classifier: &self.classifier,
            meta_classifier: &self.meta_classifier,
            meta_folds: self.meta_folds,
            seed: derive_seed(self.seed, salt),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A trained cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPipeline {
    pub descriptor: PipelineDescriptor,
    pub descriptor_hash: String,
    pub relevance: StageModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_stage: Option<StageModel>,
}

fn check_lengths(bundles: &[FeatureBundle], labels: &[ClassLabel]) -> Result<(), FusionError> {
    if bundles.len() != labels.len() {
        return Err(FusionError::LengthMismatch {
            records: bundles.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

/// Binary relevance stage: every event type maps to `event`.
pub fn train_relevance_stage(
    descriptor: &PipelineDescriptor,
    bundles: &[FeatureBundle],
    labels: &[ClassLabel],
) -> Result<StageModel, FusionError> {
    descriptor.validate()?;
    check_lengths(bundles, labels)?;
    let y: Vec<usize> = labels.iter().map(|l| usize::from(l.is_event())).collect();
    let n_event = y.iter().sum::<usize>();
    if n_event == 0 || n_event == y.len() {
        return Err(FusionError::DegenerateLabels(
            "relevance stage needs both event and non-event records".into(),
        ));
    }
    let classes: Vec<String> = RELEVANCE_CLASSES.iter().map(|s| s.to_string()).collect();
    let groups = descriptor.resolved_groups();
    train_stage(&descriptor.stage_spec(&groups, 1), bundles, &y, &classes)
}

/// Event-type stage, trained on the ground-truth event records only.
pub fn train_type_stage(
    descriptor: &PipelineDescriptor,
    bundles: &[FeatureBundle],
    labels: &[ClassLabel],
) -> Result<StageModel, FusionError> {
    descriptor.validate()?;
    check_lengths(bundles, labels)?;
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i].is_event())
        .collect();
    let rows: Vec<FeatureBundle> = keep.iter().map(|&i| bundles[i].clone()).collect();
    let y: Vec<usize> = keep.iter().map(|&i| labels[i].index() - 1).collect();
    let mut counts = [0usize; 8];
    for &l in &y {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(FusionError::DegenerateLabels(
            "type stage needs at least two event classes".into(),
        ));
    }
    for (c, &n) in ClassLabel::EVENT_TYPES.iter().zip(&counts) {
        if n < 2 {
            log::warn!("event class {c} has {n} training records");
        }
    }
    let classes: Vec<String> = ClassLabel::EVENT_TYPES
        .iter()
        .map(|c| c.as_str().to_string())
        .collect();
    let groups = descriptor.resolved_groups();
    train_stage(&descriptor.stage_spec(&groups, 2), &rows, &y, &classes)
}

impl FusionPipeline {
    /// Trains the relevance stage, and the type stage for the type task.
    pub fn train(
        descriptor: &PipelineDescriptor,
        bundles: &[FeatureBundle],
        labels: &[ClassLabel],
    ) -> Result<Self, FusionError> {
        let relevance = train_relevance_stage(descriptor, bundles, labels)?;
        let type_stage = match descriptor.task {
            Task::Type => Some(train_type_stage(descriptor, bundles, labels)?),
            Task::Relevance => None,
        };
        Ok(Self {
            descriptor: descriptor.clone(),
            descriptor_hash: descriptor.hash(),
            relevance,
            type_stage,
        })
    }

    /// `true` for records the relevance stage accepts as events.
    pub fn predict_relevance(&self, bundles: &[FeatureBundle]) -> Result<Vec<bool>, FusionError> {
        Ok(self
            .relevance
            .predict(bundles)?
            .into_iter()
            .map(|c| c == 1)
            .collect())
    }

    /// Event type for every record, ignoring the relevance stage.
    pub fn predict_type(&self, bundles: &[FeatureBundle]) -> Result<Vec<ClassLabel>, FusionError> {
        let stage = self
            .type_stage
            .as_ref()
            .ok_or(FusionError::UntrainedStage("type"))?;
        Ok(stage
            .predict(bundles)?
            .into_iter()
            .map(|c| ClassLabel::EVENT_TYPES[c])
            .collect())
    }

    /// Cascade prediction: records rejected by the relevance stage become
    /// `non_event`; the rest get an event type from the type stage.
    pub fn predict_two_stage(
        &self,
        bundles: &[FeatureBundle],
    ) -> Result<Vec<ClassLabel>, FusionError> {
        let stage = self
            .type_stage
            .as_ref()
            .ok_or(FusionError::UntrainedStage("type"))?;
        let relevant = self.predict_relevance(bundles)?;
        let passed: Vec<usize> = (0..bundles.len()).filter(|&i| relevant[i]).collect();
        let subset: Vec<FeatureBundle> = passed.iter().map(|&i| bundles[i].clone()).collect();
        let types = stage.predict(&subset)?;
        let mut out = vec![ClassLabel::NonEvent; bundles.len()];
        for (&i, t) in passed.iter().zip(types) {
            out[i] = ClassLabel::EVENT_TYPES[t];
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
