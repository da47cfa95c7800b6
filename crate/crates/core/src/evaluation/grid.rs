//! Cross-validated grid search over arbitrary parameter points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fold_split, stratified_folds, EvaluationError};

/// Fold scores of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointScore {
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); zero for one fold.
    pub std: f64,
}

impl GridPointScore {
    pub fn from_scores(fold_scores: Vec<f64>) -> Self {
        let n = fold_scores.len() as f64;
        let mean = fold_scores.iter().sum::<f64>() / n;
        let std = if fold_scores.len() > 1 {
            (fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            fold_scores,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<usize>,
    pub points: Vec<GridPointScore>,
    pub best: usize,
}

impl GridSearchResult {
    pub fn best_score(&self) -> &GridPointScore {
        &self.points[self.best]
    }
}

/// Scores every grid point on stratified `k`-fold splits of `labels`.
///
/// `evaluate(point, train, test)` fits on the `train` rows and returns the
/// target metric on the `test` rows. All (point, fold) pairs run in
/// parallel. The point with the highest mean wins; ties go to the earliest
/// point, so grids should be listed from the smallest model (lowest C,
/// fewest rounds) upwards.
pub fn cross_validate_grid_search<P, E, F>(
    labels: &[usize],
    grid: &[P],
    k: usize,
    seed: u64,
    evaluate: F,
) -> Result<GridSearchResult, EvaluationError>
where
    P: Sync,
    E: std::fmt::Display + Send,
    F: Fn(&P, &[usize], &[usize]) -> Result<f64, E> + Sync,
{
    if grid.is_empty() {
        return Err(EvaluationError::EmptyGrid);
    }
    if k < 2 {
        return Err(EvaluationError::InvalidParameter(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if labels.len() < k {
        return Err(EvaluationError::InvalidParameter(format!(
            "{} rows cannot fill {k} folds",
            labels.len()
        )));
    }
    let folds = stratified_folds(labels, k, seed);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k).map(|f| fold_split(&folds, f)).collect();

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..k).map(move |f| (p, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (train, test) = &splits[f];
            evaluate(&grid[p], train, test).map_err(|e| EvaluationError::Fold {
                point: p,
                fold: f,
                message: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;

    let points: Vec<GridPointScore> = scores
        .chunks(k)
        .map(|c| GridPointScore::from_scores(c.to_vec()))
        .collect();
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.mean > points[best].mean {
            best = i;
        }
    }
    Ok(GridSearchResult {
        k,
        seed,
        folds,
        points,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_and_ties() {
        let s = GridPointScore::from_scores(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let r = cross_validate_grid_search(&labels, &[1, 2, 2], 5, 0, |&p, _, _| {
            Ok::<_, String>(p as f64)
        })
        .unwrap();
        assert_eq!(r.best, 1);
        assert!(
            cross_validate_grid_search(&labels, &[] as &[u8], 5, 0, |_, _, _| {
                Ok::<_, String>(0.0)
            })
            .is_err()
        );
    }
}
