//! Top-N vocabulary and "ntc" TF-IDF weighting.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::preprocess::TokenList;
use crate::vector::{l2_normalize, FeatureVector, SparseVector};

pub const VOCABULARY_FORMAT_VERSION: u32 = 1;

/// The N most frequent development-set terms with their document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub format_version: u32,
    /// Requested term budget; `terms.len()` may be smaller.
    pub requested: usize,
    pub terms: Vec<String>,
    pub document_frequency: Vec<u64>,
    pub corpus_size: u64,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_parts(requested: usize, terms: Vec<String>, df: Vec<u64>, corpus_size: u64) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            format_version: VOCABULARY_FORMAT_VERSION,
            requested,
            terms,
            document_frequency: df,
            corpus_size,
            index,
        }
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        if self.index.is_empty() && !self.terms.is_empty() {
            return self.terms.iter().position(|t| t == term);
        }
        self.index.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<u64> {
        self.index_of(term).map(|i| self.document_frequency[i])
    }

    /// Logged inverse document frequency `ln(D / df)` of the term at `index`.
    pub fn idf(&self, index: usize) -> f64 {
        (self.corpus_size as f64 / self.document_frequency[index] as f64).ln()
    }
}

/// Keeps the `n` terms with the highest collection frequency, ties broken
/// lexicographically. Document frequencies are counted over the same documents.
pub fn build_vocabulary(docs: &[TokenList], n: usize) -> Vocabulary {
    assert!(n >= 1, "term budget must be at least 1");
    let mut cf: BTreeMap<&str, u64> = BTreeMap::new();
    let mut df: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        let mut seen = std::collections::HashSet::new();
        for t in doc.iter() {
            *cf.entry(t).or_default() += 1;
            if seen.insert(t) {
                *df.entry(t).or_default() += 1;
            }
        }
    }
    if docs.is_empty() || cf.is_empty() {
        log::warn!("building a vocabulary from an empty corpus");
    }
    let mut ranked: Vec<(&str, u64)> = cf.into_iter().collect();
    // BTreeMap order is lexicographic; the stable sort keeps it within equal counts.
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    if ranked.len() < n {
        log::warn!(
            "only {} distinct terms available for a budget of {n}",
            ranked.len()
        );
    }
    ranked.truncate(n);
    let terms: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
    let dfs = ranked.iter().map(|(t, _)| df[t]).collect();
    Vocabulary::from_parts(n, terms, dfs, docs.len() as u64)
}

/// Natural tf times `ln(D/df)`, cosine-normalized. Out-of-vocabulary tokens are
/// ignored; documents with no weighted terms map to the zero vector.
pub fn tfidf_vector(tokens: &TokenList, vocab: &Vocabulary) -> FeatureVector {
    let mut tf: BTreeMap<usize, u64> = BTreeMap::new();
    for t in tokens.iter() {
        if let Some(i) = vocab.index_of(t) {
            *tf.entry(i).or_default() += 1;
        }
    }
    let (indices, mut values): (Vec<u32>, Vec<f64>) = tf
        .into_iter()
        .map(|(i, count)| (i as u32, count as f64 * vocab.idf(i)))
        .filter(|&(_, w)| w != 0.0)
        .unzip();
    l2_normalize(&mut values);
    let (indices, values) = indices
        .into_iter()
        .zip(values)
        .filter(|&(_, v)| v != 0.0)
        .unzip();
    FeatureVector::Sparse(SparseVector {
        dim: vocab.len(),
        indices,
        values,
    })
}
