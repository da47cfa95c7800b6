//! Weighted Gini decision trees and RUSBoost (AdaBoost with random
//! undersampling before each round) for binary {-1, +1} problems.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::vector::FeatureVector;

/// Redraws of the undersample allowed when a round's weak learner has error >= 0.5.
pub const MAX_REDRAWS: usize = 10;
const MIN_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// Binary decision tree; samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

fn gini_cost(pos: f64, neg: f64) -> f64 {
    let t = pos + neg;
    if t <= 0.0 {
        0.0
    } else {
        // weight * (1 - p^2 - q^2)
        2.0 * pos * neg / t
    }
}

impl DecisionTree {
    /// Fits a tree on `rows[idx]` with labels `y` (+-1) and sample weights.
    pub fn fit(
        rows: &[FeatureVector],
        idx: &[usize],
        y: &[f64],
        weights: &[f64],
        max_depth: usize,
    ) -> Self {
        assert_eq!(idx.len(), y.len());
        assert_eq!(idx.len(), weights.len());
        let dim = rows[idx[0]].dim();
        // dense columns for features that vary within the sample
        let mut touched = vec![false; dim];
        for &i in idx {
            for (f, v) in rows[i].iter_stored() {
                if v != 0.0 {
                    touched[f] = true;
                }
            }
        }
        let features: Vec<usize> = (0..dim).filter(|&f| touched[f]).collect();
        let columns: Vec<Vec<f64>> = features
            .iter()
            .map(|&f| idx.iter().map(|&i| rows[i].get(f)).collect())
            .collect();

        let mut tree = DecisionTree { nodes: Vec::new() };
        let all: Vec<usize> = (0..idx.len()).collect();
        tree.grow(&all, y, weights, &features, &columns, max_depth);
        tree
    }

    fn grow(
        &mut self,
        members: &[usize],
        y: &[f64],
        w: &[f64],
        features: &[usize],
        columns: &[Vec<f64>],
        depth_left: usize,
    ) -> u32 {
        let (pos, neg) = members.iter().fold((0.0, 0.0), |(p, n), &m| {
            if y[m] > 0.0 {
                (p + w[m], n)
            } else {
                (p, n + w[m])
            }
        });
        let id = self.nodes.len() as u32;
        let leaf = TreeNode::Leaf {
            value: if pos > neg { 1.0 } else { -1.0 },
        };
        self.nodes.push(leaf.clone());
        let parent = gini_cost(pos, neg);
        if depth_left == 0 || members.len() < 2 || parent <= 0.0 {
            return id;
        }

        // best (cost, column, threshold); earlier features and thresholds win ties
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = members.to_vec();
        for (ci, col) in columns.iter().enumerate() {
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let (mut lp, mut ln) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let m = order[k];
                if y[m] > 0.0 {
                    lp += w[m];
                } else {
                    ln += w[m];
                }
                let (a, b) = (col[m], col[order[k + 1]]);
                if a == b {
                    continue;
                }
                let cost = gini_cost(lp, ln) + gini_cost(pos - lp, neg - ln);
                if best.is_none_or(|(bc, _, _)| cost < bc) {
                    best = Some((cost, ci, 0.5 * (a + b)));
                }
            }
        }
        let Some((cost, ci, threshold)) = best else {
            return id;
        };
        if cost >= parent - 1e-12 * parent.max(1.0) {
            return id;
        }
        let col = &columns[ci];
        let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&m| col[m] <= threshold);
        let left = self.grow(&l, y, w, features, columns, depth_left - 1);
        let right = self.grow(&r, y, w, features, columns, depth_left - 1);
        self.nodes[id as usize] = TreeNode::Split {
            feature: features[ci] as u32,
            threshold,
            left,
            right,
        };
        id
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x.get(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub learners: Vec<(f64, DecisionTree)>,
}

impl BoostedEnsemble {
    /// Weighted vote scaled to `[-1, 1]`.
    pub fn score(&self, x: &FeatureVector) -> f64 {
        let total: f64 = self.learners.iter().map(|(a, _)| a).sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.learners
            .iter()
            .map(|(a, t)| a * t.predict(x))
            .sum::<f64>()
            / total
    }
}

/// RUSBoost over `rows[idx]` with labels `y` (+-1), both classes present.
///
/// Each round draws, uniformly without replacement, as many rows from the
/// larger side as the smaller side has, fits a tree on that balanced subset
/// with the current boosting weights, and measures weighted error on all
/// rows. A round whose error is >= 0.5 is redrawn up to [`MAX_REDRAWS`]
/// times and skipped if none succeeds. Boosting stops early once a learner
/// makes no weighted error.
pub(crate) fn rusboost(
    rows: &[FeatureVector],
    idx: &[usize],
    y: &[f64],
    rounds: usize,
    max_depth: usize,
    seed: u64,
) -> BoostedEnsemble {
    let n = idx.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = vec![1.0 / n as f64; n];
    let pos: Vec<usize> = (0..n).filter(|&k| y[k] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&k| y[k] <= 0.0).collect();
    let m = pos.len().min(neg.len());
    let mut learners = Vec::new();

    'rounds: for round in 0..rounds {
        for _attempt in 0..=MAX_REDRAWS {
            let mut subset: Vec<usize> = pos.choose_multiple(&mut rng, m).copied().collect();
            subset.extend(neg.choose_multiple(&mut rng, m));
            subset.sort_unstable();
            let sub_idx: Vec<usize> = subset.iter().map(|&k| idx[k]).collect();
            let sub_y: Vec<f64> = subset.iter().map(|&k| y[k]).collect();
            let mass: f64 = subset.iter().map(|&k| d[k]).sum();
            let sub_w: Vec<f64> = subset.iter().map(|&k| d[k] / mass).collect();
            let tree = DecisionTree::fit(rows, &sub_idx, &sub_y, &sub_w, max_depth);

            let preds: Vec<f64> = idx.iter().map(|&i| tree.predict(&rows[i])).collect();
            let err: f64 = (0..n).filter(|&k| preds[k] != y[k]).map(|k| d[k]).sum();
            if err >= 0.5 {
                continue;
            }
            let eps = err.max(MIN_ERROR);
            let alpha = 0.5 * ((1.0 - eps) / eps).ln();
            learners.push((alpha, tree));
            if err <= 0.0 {
                break 'rounds;
            }
            for k in 0..n {
                d[k] *= (-alpha * y[k] * preds[k]).exp();
            }
            let z: f64 = d.iter().sum();
            d.iter_mut().for_each(|v| *v /= z);
            continue 'rounds;
        }
        log::debug!("RUSBoost round {round} skipped: no draw reached error < 0.5");
    }
    if learners.is_empty() {
        log::warn!("RUSBoost kept no learner; falling back to one tree on all rows");
        let w = vec![1.0 / n as f64; n];
        learners.push((1.0, DecisionTree::fit(rows, idx, y, &w, max_depth)));
    }
    BoostedEnsemble { learners }
}
