//! Multimodal feature extraction and classification for social event detection.
//!
//! The crate covers the whole path from metadata and images to event labels:
//!
//! * [`corpus`]: records, the nine-class label set and development/test splits
//! * [`text`]: token cleanup, TF-IDF and LDA topic features with ILR coordinates
//! * [`visual`]: image standardization, GIST and sparse/dense SIFT
//! * [`encoding`]: k-means codebooks, bag-of-words, VLAD and PCA
//! * [`classifiers`]: linear SVM, RBF SVM and RUSBoost with probability calibration
//! * [`fusion`]: early, additive-late and hierarchical-late fusion in a
//!   relevance-then-type cascade
//! * [`evaluation`]: confusion matrices, SED f1 aggregates, cross-validated
//!   grid search, random baselines and report output
//! * [`synthetic`]: a seeded multimodal toy corpus for end-to-end checks

pub mod classifiers;
pub mod corpus;
pub mod encoding;
pub mod evaluation;
pub mod fusion;
pub mod seed;
pub mod synthetic;
pub mod text;
pub mod vector;
pub mod visual;

pub use corpus::{ClassLabel, Corpus, MediaRecord, Split};
pub use vector::{FeatureVector, SparseVector};
