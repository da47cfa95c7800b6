//! Codebooks and encodings for local descriptors, plus PCA for global ones.

mod bow;
mod kmeans;
mod pca;
mod sample;

pub use bow::{assign_nearest, encode_bow_hard, encode_vlad, VladNormalization};
pub use kmeans::{kmeans_codebook, Codebook, KMeansConfig};
pub use pca::{apply_pca, fit_pca, PcaModel, DEFAULT_VARIANCE_TARGET};
pub use sample::{sample_descriptors, sample_descriptors_with, DescriptorSample, SampleConfig};

use thiserror::Error;

/// Codebook sizes evaluated for hard-assignment bag-of-words.
pub const BOW_CODEBOOK_GRID: [usize; 5] = [500, 1000, 2500, 5000, 7000];
/// Codebook sizes evaluated for VLAD.
pub const VLAD_CODEBOOK_GRID: [usize; 3] = [16, 24, 32];

pub(crate) const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("sample has {available} descriptors, fewer than the {k} requested clusters")]
    SampleTooSmall { available: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("input has no variance")]
    NoVariance,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
