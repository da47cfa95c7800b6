//! Confusion matrices and per-class precision, recall and f1.

use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::corpus::ClassLabel;

/// Square count matrix; rows are truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: &[String]) -> Self {
        let n = classes.len();
        Self {
            classes: classes.to_vec(),
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Fraction on the diagonal; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }
}

/// Counts `(truth, prediction)` pairs; labels index into `classes`.
pub fn confusion_matrix(
    truth: &[usize],
    predicted: &[usize],
    classes: &[String],
) -> Result<ConfusionMatrix, EvaluationError> {
    if truth.len() != predicted.len() {
        return Err(EvaluationError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut m = ConfusionMatrix::zeros(classes);
    let n = classes.len();
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= n {
                return Err(EvaluationError::LabelOutOfRange { label, classes: n });
            }
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}

pub fn class_names(labels: &[ClassLabel]) -> Vec<String> {
    labels.iter().map(|c| c.as_str().to_string()).collect()
}

/// Confusion matrix over the nine event classes.
pub fn confusion_matrix_9(truth: &[ClassLabel], predicted: &[ClassLabel]) -> ConfusionMatrix {
    let t: Vec<usize> = truth.iter().map(|c| c.index()).collect();
    let p: Vec<usize> = predicted.iter().map(|c| c.index()).collect();
    confusion_matrix(&t, &p, &class_names(&ClassLabel::ALL))
        .expect("class labels always index the nine-class set")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub per_class: Vec<ClassScores>,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Mean f1 over event and non-event; set for two-class matrices only.
    pub f1_ene_avg: Option<f64>,
    /// Mean f1 over all nine classes; set for nine-class matrices only.
    pub f1_type_avg: Option<f64>,
}

impl F1Scores {
    pub fn f1(&self, class: &str) -> Option<f64> {
        self.per_class
            .iter()
            .find(|c| c.class == class)
            .map(|c| c.f1)
    }

    /// The task aggregate: f1_ene_avg for binary runs, f1_type_avg for
    /// nine-class runs, macro f1 otherwise.
    pub fn headline(&self) -> f64 {
        self.f1_ene_avg
            .or(self.f1_type_avg)
            .unwrap_or(self.macro_f1)
    }
}

/// `2PR / (P + R)`, zero when both are zero.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn f1_ene_avg(f1_event: f64, f1_non_event: f64) -> f64 {
    (f1_event + f1_non_event) / 2.0
}

/// Precision, recall and f1 per class. Undefined ratios (no predictions or
/// no true members) count as zero, so a class absent from both truth and
/// predictions gets f1 = 0.
pub fn f1_scores(matrix: &ConfusionMatrix) -> F1Scores {
    let n = matrix.n_classes();
    let per_class: Vec<ClassScores> = (0..n)
        .map(|i| {
            let tp = matrix.counts[i][i] as f64;
            let predicted = matrix.col_sum(i);
            let support = matrix.row_sum(i);
            let precision = if predicted > 0 {
                tp / predicted as f64
            } else {
                0.0
            };
            let recall = if support > 0 {
                tp / support as f64
            } else {
                0.0
            };
            ClassScores {
                class: matrix.classes[i].clone(),
                precision,
                recall,
                f1: f1_from(precision, recall),
                support,
            }
        })
        .collect();
    let macro_f1 = if n == 0 {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / n as f64
    };
    F1Scores {
        accuracy: matrix.accuracy(),
        macro_f1,
        f1_ene_avg: (n == 2).then(|| f1_ene_avg(per_class[0].f1, per_class[1].f1)),
        f1_type_avg: (n == ClassLabel::ALL.len()).then_some(macro_f1),
        per_class,
    }
}
