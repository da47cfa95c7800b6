//! Confusion matrices, SED f1 aggregates, cross-validated grid search,
//! random baselines and report output.

mod baseline;
mod folds;
mod grid;
mod metrics;
mod report;

pub use baseline::{random_baseline, random_baseline_monte_carlo, BaselineScores};
pub use folds::{fold_split, stratified_folds};
pub use grid::{cross_validate_grid_search, GridPointScore, GridSearchResult};
pub use metrics::{
    class_names, confusion_matrix, confusion_matrix_9, f1_ene_avg, f1_from, f1_scores, ClassScores,
    ConfusionMatrix, F1Scores,
};
pub use report::{
    emit_report, EvaluationReport, ReportFormat, ReportMetadata, CSV_COLUMNS, REPORT_SCHEMA_VERSION,
};

use thiserror::Error;

/// Folds used by the evaluation protocol.
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("{truth} truth labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} outside the {classes}-class set")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("grid point {point}, fold {fold}: {message}")]
    Fold {
        point: usize,
        fold: usize,
        message: String,
    },
    #[error("priors must be non-negative and sum to one: {0:?}")]
    InvalidPriors(Vec<f64>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
}
