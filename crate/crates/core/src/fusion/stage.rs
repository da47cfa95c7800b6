//! One classification stage under a fusion strategy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{early_fuse_all, FeatureBundle, FusionError, FusionStrategy};
use crate::classifiers::{argmax, train, ClassifierConfig, TrainedModel};
use crate::evaluation::{fold_split, stratified_folds};
use crate::seed::derive_seed;
use crate::vector::FeatureVector;

/// Sums probability vectors and returns the winning class; the lowest
/// class index wins ties.
pub fn additive_late_fuse(probabilities: &[&[f64]]) -> Result<usize, FusionError> {
    let first = probabilities.first().ok_or(FusionError::NoClassifiers)?;
    let n = first.len();
    let mut sum = vec![0.0; n];
    for p in probabilities {
        if p.len() != n {
            return Err(FusionError::ClassSetMismatch {
                expected: n,
                got: p.len(),
            });
        }
        for (s, v) in sum.iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    Ok(argmax(&sum))
}

/// Concatenated probability outputs of the lower-level classifiers.
pub fn meta_features(probabilities: &[&[f64]]) -> FeatureVector {
    FeatureVector::dense(
        probabilities
            .iter()
            .flat_map(|p| p.iter().copied())
            .collect(),
    )
}

/// Out-of-fold class probabilities: row `i` is scored by a model trained
/// on every fold except `folds[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfFold {
    pub folds: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

/// Seed used for the model of fold `f` inside [`out_of_fold_probabilities`].
pub fn fold_model_seed(seed: u64, f: usize) -> u64 {
    derive_seed(seed, 0x00F0_0000 + f as u64)
}

pub fn out_of_fold_probabilities(
    config: &ClassifierConfig,
    rows: &[FeatureVector],
    labels: &[usize],
    classes: &[String],
    k: usize,
    seed: u64,
) -> Result<OutOfFold, FusionError> {
    let folds = stratified_folds(labels, k, seed);
    let per_fold: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (train_idx, test_idx) = fold_split(&folds, f);
            debug_assert!(test_idx.iter().all(|i| !train_idx.contains(i)));
            let x: Vec<FeatureVector> = train_idx.iter().map(|&i| rows[i].clone()).collect();
            let y: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
            let cfg = config.clone().with_seed(fold_model_seed(config.seed, f));
            let model = train(&cfg, &x, &y, classes)?;
            let probs = test_idx
                .iter()
                .map(|&i| model.probabilities(&rows[i]))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((test_idx, probs))
        })
        .collect::<Result<_, FusionError>>()?;
    let mut probabilities = vec![Vec::new(); rows.len()];
    for (test_idx, probs) in per_fold {
        for (i, p) in test_idx.into_iter().zip(probs) {
            probabilities[i] = p;
        }
    }
    Ok(OutOfFold {
        folds,
        probabilities,
    })
}

/// Trained models of one stage: one model per feature group plus an
/// optional meta model for hierarchical late fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModel {
    pub classes: Vec<String>,
    pub strategy: FusionStrategy,
    pub groups: Vec<Vec<String>>,
    pub models: Vec<TrainedModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<TrainedModel>,
    /// Fold of every training row used for the meta features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_folds: Option<Vec<usize>>,
}

pub(crate) struct StageSpec<'a> {
    pub strategy: FusionStrategy,
    pub groups: &'a [Vec<String>],
    pub classifier: &'a ClassifierConfig,
    pub meta_classifier: &'a ClassifierConfig,
    pub meta_folds: usize,
    pub seed: u64,
}

pub(crate) fn train_stage(
    spec: &StageSpec,
    bundles: &[FeatureBundle],
    labels: &[usize],
    classes: &[String],
) -> Result<StageModel, FusionError> {
    let fused: Vec<Vec<FeatureVector>> = spec
        .groups
        .iter()
        .map(|g| early_fuse_all(bundles, g))
        .collect::<Result<_, _>>()?;
    let group_config = |g: usize| {
        spec.classifier
            .clone()
            .with_seed(derive_seed(spec.seed, g as u64))
    };

    let models: Vec<TrainedModel> = (0..spec.groups.len())
        .into_par_iter()
        .map(|g| train(&group_config(g), &fused[g], labels, classes).map_err(FusionError::from))
        .collect::<Result<_, _>>()?;

    let (meta, meta_folds) = match spec.strategy {
        FusionStrategy::HierarchicalLate => {
            let fold_seed = derive_seed(spec.seed, 0x3E7A);
            let oof: Vec<OutOfFold> = (0..spec.groups.len())
                .into_par_iter()
                .map(|g| {
                    out_of_fold_probabilities(
                        &group_config(g),
                        &fused[g],
                        labels,
                        classes,
                        spec.meta_folds,
                        fold_seed,
                    )
                })
                .collect::<Result<_, _>>()?;
            let meta_rows: Vec<FeatureVector> = (0..labels.len())
                .map(|i| {
                    let parts: Vec<&[f64]> =
                        oof.iter().map(|o| o.probabilities[i].as_slice()).collect();
                    meta_features(&parts)
                })
                .collect();
            let cfg = spec
                .meta_classifier
                .clone()
                .with_seed(derive_seed(spec.seed, 0x3E7B));
            let meta = train(&cfg, &meta_rows, labels, classes)?;
            (Some(meta), Some(oof[0].folds.clone()))
        }
        _ => (None, None),
    };

    Ok(StageModel {
        classes: classes.to_vec(),
        strategy: spec.strategy,
        groups: spec.groups.to_vec(),
        models,
        meta,
        meta_folds,
    })
}

impl StageModel {
    /// Class index into [`StageModel::classes`] for every record.
    pub fn predict(&self, bundles: &[FeatureBundle]) -> Result<Vec<usize>, FusionError> {
        let fused: Vec<Vec<FeatureVector>> = self
            .groups
            .iter()
            .map(|g| early_fuse_all(bundles, g))
            .collect::<Result<_, _>>()?;
        (0..bundles.len())
            .into_par_iter()
            .map(|i| self.predict_one(&fused, i))
            .collect()
    }

    fn predict_one(&self, fused: &[Vec<FeatureVector>], i: usize) -> Result<usize, FusionError> {
        match self.strategy {
            FusionStrategy::Early => Ok(self.models[0].predict_label(&fused[0][i])?),
            FusionStrategy::AdditiveLate | FusionStrategy::HierarchicalLate => {
                let probs = self
                    .models
                    .iter()
                    .zip(fused)
                    .map(|(m, rows)| m.probabilities(&rows[i]))
                    .collect::<Result<Vec<_>, _>>()?;
                let parts: Vec<&[f64]> = probs.iter().map(|p| p.as_slice()).collect();
                match &self.meta {
                    Some(meta) => Ok(meta.predict_label(&meta_features(&parts))?),
                    None => additive_late_fuse(&parts),
                }
            }
        }
    }
}
