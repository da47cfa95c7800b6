//! Linear SVM, RBF-kernel SVM and RUSBoost behind one trained-model type.
//!
//! Every classifier is reduced to one-vs-rest binary problems. Scores are
//! turned into probabilities by per-class Platt scaling fitted on
//! out-of-fold scores, normalized across classes.

mod boost;
mod calibration;
mod kernel;
mod linear;

pub use boost::{BoostedEnsemble, DecisionTree, TreeNode, MAX_REDRAWS};
pub use calibration::PlattScaling;
pub use kernel::{kernel_matrix, rbf_kernel};
pub use linear::{linear_svm_objective, linear_svm_subgradient};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{fold_split, stratified_folds};
use crate::seed::derive_seed;
use crate::vector::FeatureVector;

/// Regularization values searched for both SVM kinds.
pub const C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
/// Boosting round counts searched for RUSBoost.
pub const ROUNDS_GRID: [usize; 3] = [50, 100, 200];
pub const DEFAULT_CALIBRATION_FOLDS: usize = 5;
pub const DEFAULT_TREE_DEPTH: usize = 3;
const MODEL_FORMAT_VERSION: u32 = 1;

/// RBF widths searched: powers of two from 2^-7 to 2^3.
pub fn gamma_grid() -> Vec<f64> {
    (-7..=3).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("no training rows")]
    Empty,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("label {label} outside the {classes}-class set")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),
    #[error("model has no probability calibration")]
    Uncalibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    LinearSvm { c: f64 },
    RbfSvm { c: f64, gamma: f64 },
    Rusboost { rounds: usize, max_depth: usize },
}

impl ClassifierKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::LinearSvm { .. } => "linear_svm",
            ClassifierKind::RbfSvm { .. } => "rbf_svm",
            ClassifierKind::Rusboost { .. } => "rusboost",
        }
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::InvalidParameter(m));
        match *self {
            ClassifierKind::LinearSvm { c } | ClassifierKind::RbfSvm { c, .. }
                if !(c > 0.0 && c.is_finite()) =>
            {
                bad(format!("C must be positive, got {c}"))
            }
            ClassifierKind::RbfSvm { gamma, .. } if !(gamma > 0.0 && gamma.is_finite()) => {
                bad(format!("gamma must be positive, got {gamma}"))
            }
            ClassifierKind::Rusboost { rounds: 0, .. } => bad("rounds must be >= 1".into()),
            ClassifierKind::Rusboost { max_depth: 0, .. } => bad("max_depth must be >= 1".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub seed: u64,
    /// Folds for out-of-fold calibration scores; below 2 disables probabilities.
    pub calibration_folds: usize,
}

impl ClassifierConfig {
    pub fn new(kind: ClassifierKind) -> Self {
        Self {
            kind,
            seed: 0,
            calibration_folds: DEFAULT_CALIBRATION_FOLDS,
        }
    }

    pub fn linear_svm(c: f64) -> Self {
        Self::new(ClassifierKind::LinearSvm { c })
    }

    pub fn rbf_svm(c: f64, gamma: f64) -> Self {
        Self::new(ClassifierKind::RbfSvm { c, gamma })
    }

    pub fn rusboost(rounds: usize) -> Self {
        Self::new(ClassifierKind::Rusboost {
            rounds,
            max_depth: DEFAULT_TREE_DEPTH,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_calibration_folds(mut self, folds: usize) -> Self {
        self.calibration_folds = folds;
        self
    }
}

/// One-vs-rest scorer for a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BinaryModel {
    /// Used when the class is absent from (or is all of) the training rows.
    Constant {
        score: f64,
    },
    /// Weights followed by the bias.
    Linear {
        weights: Vec<f64>,
    },
    /// Indices into the model's shared support-vector pool.
    Kernel {
        support: Vec<u32>,
        coef: Vec<f64>,
        rho: f64,
    },
    Ensemble(BoostedEnsemble),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ClassifierConfig,
    pub classes: Vec<String>,
    pub dim: usize,
    pub models: Vec<BinaryModel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support_vectors: Vec<FeatureVector>,
    pub calibration: Option<Vec<PlattScaling>>,
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

enum Fitted {
    Constant(f64),
    Linear(Vec<f64>),
    Kernel {
        support: Vec<usize>,
        coef: Vec<f64>,
        rho: f64,
    },
    Ensemble(BoostedEnsemble),
}

fn fit_binary(
    kind: &ClassifierKind,
    rows: &[FeatureVector],
    source: Option<&kernel::KernelSource>,
    idx: &[usize],
    y: &[f64],
    seed: u64,
) -> Fitted {
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    if n_pos == 0 || n_pos == y.len() {
        return Fitted::Constant(if n_pos == 0 { -1.0 } else { 1.0 });
    }
    match *kind {
        ClassifierKind::LinearSvm { c } => Fitted::Linear(linear::solve(
            rows,
            idx,
            y,
            c,
            seed,
            linear::DEFAULT_TOLERANCE,
            linear::DEFAULT_MAX_EPOCHS,
        )),
        ClassifierKind::RbfSvm { c, .. } => {
            let fit = kernel::solve(
                source.expect("kernel source for RBF"),
                idx,
                y,
                c,
                kernel::DEFAULT_TOLERANCE,
            );
            Fitted::Kernel {
                support: fit.support.iter().map(|&k| idx[k]).collect(),
                coef: fit.coef,
                rho: fit.rho,
            }
        }
        ClassifierKind::Rusboost { rounds, max_depth } => {
            Fitted::Ensemble(boost::rusboost(rows, idx, y, rounds, max_depth, seed))
        }
    }
}

/// Trains one scorer per class on `idx` rows.
fn fit_ovr(
    config: &ClassifierConfig,
    rows: &[FeatureVector],
    source: Option<&kernel::KernelSource>,
    labels: &[usize],
    idx: &[usize],
    n_classes: usize,
    seed: u64,
) -> Vec<Fitted> {
    (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if labels[i] == c { 1.0 } else { -1.0 })
                .collect();
            fit_binary(
                &config.kind,
                rows,
                source,
                idx,
                &y,
                derive_seed(seed, c as u64),
            )
        })
        .collect()
}

fn score_fitted(
    fitted: &Fitted,
    rows: &[FeatureVector],
    source: Option<&kernel::KernelSource>,
    i: usize,
) -> f64 {
    match fitted {
        Fitted::Constant(s) => *s,
        Fitted::Linear(w) => linear::decision(w, &rows[i]),
        Fitted::Kernel { support, coef, rho } => {
            let src = source.expect("kernel source for RBF");
            support
                .iter()
                .zip(coef)
                .map(|(&s, &a)| a * src.value(s, i))
                .sum::<f64>()
                - rho
        }
        Fitted::Ensemble(e) => e.score(&rows[i]),
    }
}

fn validate(
    rows: &[FeatureVector],
    labels: &[usize],
    classes: &[String],
    kind: &ClassifierKind,
) -> Result<usize, ClassifierError> {
    kind.validate()?;
    if rows.is_empty() {
        return Err(ClassifierError::Empty);
    }
    if rows.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let dim = rows[0].dim();
    for (i, r) in rows.iter().enumerate() {
        if r.dim() != dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: dim,
                got: r.dim(),
            });
        }
        if r.has_non_finite() {
            return Err(ClassifierError::NonFinite { row: i });
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(ClassifierError::LabelOutOfRange {
            label: bad,
            classes: classes.len(),
        });
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ClassifierError::SingleClass);
    }
    Ok(dim)
}

/// Trains a classifier over `classes`; `labels[i]` indexes into `classes`.
pub fn train(
    config: &ClassifierConfig,
    rows: &[FeatureVector],
    labels: &[usize],
    classes: &[String],
) -> Result<TrainedModel, ClassifierError> {
    let dim = validate(rows, labels, classes, &config.kind)?;
    let n_classes = classes.len();
    let source = match config.kind {
        ClassifierKind::RbfSvm { gamma, .. } => Some(kernel::KernelSource::new(rows, gamma)),
        _ => None,
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    let fitted = fit_ovr(
        config,
        rows,
        source.as_ref(),
        labels,
        &all,
        n_classes,
        derive_seed(config.seed, u64::MAX),
    );

    let calibration = if config.calibration_folds >= 2 {
        let folds = stratified_folds(
            labels,
            config.calibration_folds,
            derive_seed(config.seed, 0xCA11),
        );
        let mut oof = vec![vec![0.0; n_classes]; rows.len()];
        let per_fold: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..config.calibration_folds)
            .into_par_iter()
            .filter_map(|f| {
                let (train_idx, test_idx) = fold_split(&folds, f);
                if test_idx.is_empty() || train_idx.is_empty() {
                    return None;
                }
                let models = fit_ovr(
                    config,
                    rows,
                    source.as_ref(),
                    labels,
                    &train_idx,
                    n_classes,
                    derive_seed(config.seed, f as u64),
                );
                let scores = test_idx
                    .iter()
                    .map(|&i| {
                        models
                            .iter()
                            .map(|m| score_fitted(m, rows, source.as_ref(), i))
                            .collect()
                    })
                    .collect();
                Some((test_idx, scores))
            })
            .collect();
        for (test_idx, scores) in per_fold {
            for (i, s) in test_idx.into_iter().zip(scores) {
                oof[i] = s;
            }
        }
        Some(
            (0..n_classes)
                .map(|c| {
                    let s: Vec<f64> = oof.iter().map(|r| r[c]).collect();
                    let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                    PlattScaling::fit(&s, &pos)
                })
                .collect(),
        )
    } else {
        None
    };

    // kernel models share one pool of support vectors
    let mut pool_of = std::collections::BTreeMap::new();
    for f in &fitted {
        if let Fitted::Kernel { support, .. } = f {
            for &s in support {
                pool_of.insert(s, 0u32);
            }
        }
    }
    for (p, v) in pool_of.values_mut().enumerate() {
        *v = p as u32;
    }
    let support_vectors = pool_of.keys().map(|&i| rows[i].clone()).collect();
    let models = fitted
        .into_iter()
        .map(|f| match f {
            Fitted::Constant(score) => BinaryModel::Constant { score },
            Fitted::Linear(weights) => BinaryModel::Linear { weights },
            Fitted::Kernel { support, coef, rho } => BinaryModel::Kernel {
                support: support.iter().map(|s| pool_of[s]).collect(),
                coef,
                rho,
            },
            Fitted::Ensemble(e) => BinaryModel::Ensemble(e),
        })
        .collect();

    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        classes: classes.to_vec(),
        dim,
        models,
        support_vectors,
        calibration,
    })
}

pub fn train_linear_svm(
    rows: &[FeatureVector],
    labels: &[usize],
    classes: &[String],
    c: f64,
    seed: u64,
) -> Result<TrainedModel, ClassifierError> {
    train(
        &ClassifierConfig::linear_svm(c).with_seed(seed),
        rows,
        labels,
        classes,
    )
}

pub fn train_rbf_svm(
    rows: &[FeatureVector],
    labels: &[usize],
    classes: &[String],
    c: f64,
    gamma: f64,
    seed: u64,
) -> Result<TrainedModel, ClassifierError> {
    train(
        &ClassifierConfig::rbf_svm(c, gamma).with_seed(seed),
        rows,
        labels,
        classes,
    )
}

pub fn train_rusboost(
    rows: &[FeatureVector],
    labels: &[usize],
    classes: &[String],
    rounds: usize,
    seed: u64,
) -> Result<TrainedModel, ClassifierError> {
    train(
        &ClassifierConfig::rusboost(rounds).with_seed(seed),
        rows,
        labels,
        classes,
    )
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// One-vs-rest decision score per class.
    pub fn decision_scores(&self, x: &FeatureVector) -> Result<Vec<f64>, ClassifierError> {
        if x.dim() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let kv: Vec<f64> = match self.config.kind {
            ClassifierKind::RbfSvm { gamma, .. } => self
                .support_vectors
                .iter()
                .map(|s| rbf_kernel(s, x, gamma))
                .collect(),
            _ => Vec::new(),
        };
        Ok(self
            .models
            .iter()
            .map(|m| match m {
                BinaryModel::Constant { score } => *score,
                BinaryModel::Linear { weights } => linear::decision(weights, x),
                BinaryModel::Kernel { support, coef, rho } => {
                    support
                        .iter()
                        .zip(coef)
                        .map(|(&s, &a)| a * kv[s as usize])
                        .sum::<f64>()
                        - rho
                }
                BinaryModel::Ensemble(e) => e.score(x),
            })
            .collect())
    }

    pub fn predict_label(&self, x: &FeatureVector) -> Result<usize, ClassifierError> {
        Ok(argmax(&self.decision_scores(x)?))
    }

    /// Calibrated class probabilities summing to one. The most probable class
    /// always equals [`TrainedModel::predict_label`]: when the per-class maps
    /// disagree with the raw score order, the probabilities of the two
    /// classes involved are swapped.
    pub fn probabilities(&self, x: &FeatureVector) -> Result<Vec<f64>, ClassifierError> {
        let cal = self
            .calibration
            .as_ref()
            .ok_or(ClassifierError::Uncalibrated)?;
        let scores = self.decision_scores(x)?;
        let mut p: Vec<f64> = scores
            .iter()
            .zip(cal)
            .map(|(&s, m)| m.probability(s))
            .collect();
        let total: f64 = p.iter().sum();
        if total > 0.0 && total.is_finite() {
            p.iter_mut().for_each(|v| *v /= total);
        } else {
            let u = 1.0 / p.len() as f64;
            p.iter_mut().for_each(|v| *v = u);
        }
        let want = argmax(&scores);
        let got = argmax(&p);
        if want != got {
            p.swap(want, got);
        }
        // exact ties with an earlier class would win the argmax; break them
        let top = p[want];
        for c in 0..want {
            if p[c] >= top {
                let delta = top * 1e-12 + f64::MIN_POSITIVE;
                p[c] -= delta;
                p[want] += delta;
            }
        }
        Ok(p)
    }
}

pub fn predict_labels(
    model: &TrainedModel,
    rows: &[FeatureVector],
) -> Result<Vec<usize>, ClassifierError> {
    rows.par_iter().map(|x| model.predict_label(x)).collect()
}

pub fn predict_probabilities(
    model: &TrainedModel,
    rows: &[FeatureVector],
) -> Result<Vec<Vec<f64>>, ClassifierError> {
    rows.par_iter().map(|x| model.probabilities(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn pts(v: &[(f64, f64)]) -> Vec<FeatureVector> {
        v.iter()
            .map(|&(a, b)| FeatureVector::dense(vec![a, b]))
            .collect()
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn validation_errors() {
        let x = pts(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(
            train_linear_svm(&x, &[0, 0], &classes(2), 1.0, 0).unwrap_err(),
            ClassifierError::SingleClass
        );
        let bad = vec![FeatureVector::dense(vec![f64::NAN, 0.0]), x[1].clone()];
        assert_eq!(
            train_linear_svm(&bad, &[0, 1], &classes(2), 1.0, 0).unwrap_err(),
            ClassifierError::NonFinite { row: 0 }
        );
        assert!(matches!(
            train_rbf_svm(&x, &[0, 1], &classes(2), 1.0, 0.0, 0),
            Err(ClassifierError::InvalidParameter(_))
        ));
        assert!(matches!(
            train_rusboost(&x, &[0, 1], &classes(2), 0, 0),
            Err(ClassifierError::InvalidParameter(_))
        ));
    }

    #[test]
    fn absent_class_gets_constant_model() {
        let x = pts(&[(0.0, 0.0), (0.1, 0.0), (1.0, 1.0), (0.9, 1.0)]);
        let m = train_linear_svm(&x, &[0, 0, 1, 1], &classes(3), 1.0, 0).unwrap();
        assert_eq!(m.models[2], BinaryModel::Constant { score: -1.0 });
        let p = m.probabilities(&x[0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_ne!(m.predict_label(&x[0]).unwrap(), 2);
    }

    #[test]
    fn uncalibrated_model_refuses_probabilities() {
        let x = pts(&[(0.0, 0.0), (1.0, 1.0)]);
        let cfg = ClassifierConfig::linear_svm(1.0).with_calibration_folds(0);
        let m = train(&cfg, &x, &[0, 1], &classes(2)).unwrap();
        assert_eq!(m.probabilities(&x[0]), Err(ClassifierError::Uncalibrated));
        assert!(matches!(
            m.decision_scores(&FeatureVector::dense(vec![1.0])),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }
}
