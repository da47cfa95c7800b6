//! Textual representations built from titles and tags.

mod ilr;
mod lda;
mod preprocess;
mod tfidf;

pub use ilr::{ilr_inverse, ilr_transform, IlrError};
pub use lda::{
    infer_topics, train_lda, LdaConfig, LdaError, TopicModel, TOPIC_MODEL_FORMAT_VERSION,
};
pub use preprocess::{
    preprocess, StopWords, TokenList, BUNDLED_STOPWORDS_VERSION, MIN_TOKEN_CHARS,
};
pub use tfidf::{build_vocabulary, tfidf_vector, Vocabulary, VOCABULARY_FORMAT_VERSION};

use crate::vector::FeatureVector;

/// TF-IDF grid evaluated in the original experiments.
pub const TFIDF_TERM_GRID: [usize; 6] = [500, 1000, 2500, 5000, 7000, 10000];
/// Topic-count grid evaluated in the original experiments.
pub const TOPIC_GRID: [usize; 4] = [50, 100, 250, 500];

/// Topic feature: inferred distribution mapped to `T-1` ILR coordinates.
pub fn topic_feature(tokens: &TokenList, model: &TopicModel) -> Result<FeatureVector, IlrError> {
    let theta = infer_topics(tokens, model);
    ilr_transform(&theta).map(FeatureVector::dense)
}
