//! Expected scores of a random predictor that draws labels from the class priors.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{confusion_matrix, f1_scores, EvaluationError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub per_class_f1: Vec<f64>,
    pub f1_ene_avg: Option<f64>,
    pub f1_type_avg: Option<f64>,
}

fn aggregates(per_class_f1: Vec<f64>) -> BaselineScores {
    let n = per_class_f1.len();
    let mean = per_class_f1.iter().sum::<f64>() / n as f64;
    BaselineScores {
        f1_ene_avg: (n == 2).then_some(mean),
        f1_type_avg: (n == 9).then_some(mean),
        per_class_f1,
    }
}

fn check_priors(priors: &[f64]) -> Result<(), EvaluationError> {
    let sum: f64 = priors.iter().sum();
    if priors.is_empty()
        || priors.iter().any(|p| !(0.0..=1.0).contains(p))
        || (sum - 1.0).abs() > 1e-6
    {
        return Err(EvaluationError::InvalidPriors(priors.to_vec()));
    }
    Ok(())
}

/// Analytic baseline: with predictions independent of the truth and drawn
/// from the priors, expected precision and recall of class `c` both equal
/// `prior(c)`, hence so does f1.
pub fn random_baseline(priors: &[f64]) -> Result<BaselineScores, EvaluationError> {
    check_priors(priors)?;
    Ok(aggregates(priors.to_vec()))
}

/// Empirical baseline: draws `draws` (truth, prediction) pairs independently
/// from the priors and scores the resulting confusion matrix.
pub fn random_baseline_monte_carlo(
    priors: &[f64],
    draws: usize,
    seed: u64,
) -> Result<BaselineScores, EvaluationError> {
    check_priors(priors)?;
    let dist =
        WeightedIndex::new(priors).map_err(|_| EvaluationError::InvalidPriors(priors.to_vec()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<usize> = (0..draws).map(|_| dist.sample(&mut rng)).collect();
    let pred: Vec<usize> = (0..draws).map(|_| dist.sample(&mut rng)).collect();
    let classes: Vec<String> = (0..priors.len()).map(|i| i.to_string()).collect();
    let m = confusion_matrix(&truth, &pred, &classes)?;
    Ok(aggregates(
        f1_scores(&m).per_class.into_iter().map(|c| c.f1).collect(),
    ))
}
