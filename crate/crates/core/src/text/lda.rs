//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Unseen documents are folded in by sampling their topic assignments against
//! the frozen word-topic counts and averaging the document-topic posterior
//! mean over the final sweeps.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::preprocess::TokenList;

pub const TOPIC_MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum LdaError {
    #[error("topic count must be at least 2, got {0}")]
    TooFewTopics(usize),
    #[error("cannot fit topics on an empty corpus")]
    EmptyCorpus,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    /// Symmetric document-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub inference_sweeps: usize,
    /// Number of trailing inference sweeps averaged into the returned distribution.
    pub inference_samples: usize,
}

impl LdaConfig {
    pub fn new(topics: usize) -> Self {
        Self {
            topics,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
            inference_sweeps: 100,
            inference_samples: 50,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub format_version: u32,
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub inference_sweeps: usize,
    pub inference_samples: usize,
    pub terms: Vec<String>,
    /// Row-major `terms.len() x topics` assignment counts.
    pub word_topic_counts: Vec<u32>,
    pub topic_totals: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TopicModel {
    pub fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    fn word_id(&self, term: &str) -> Option<usize> {
        if self.index.is_empty() && !self.terms.is_empty() {
            return self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok();
        }
        self.index.get(term).copied()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn count(&self, word: usize, topic: usize) -> u32 {
        self.word_topic_counts[word * self.topics + topic]
    }

    /// The smoothed topic-word distribution `phi[topic][word]`.
    pub fn topic_word(&self, topic: usize, word: usize) -> f64 {
        let v = self.terms.len() as f64;
        (self.count(word, topic) as f64 + self.beta)
            / (self.topic_totals[topic] as f64 + v * self.beta)
    }
}

fn validate(config: &LdaConfig) -> Result<(), LdaError> {
    if config.topics < 2 {
        return Err(LdaError::TooFewTopics(config.topics));
    }
    let alpha = config.alpha();
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(LdaError::InvalidHyperparameter(format!("alpha = {alpha}")));
    }
    if !(config.beta > 0.0 && config.beta.is_finite()) {
        return Err(LdaError::InvalidHyperparameter(format!(
            "beta = {}",
            config.beta
        )));
    }
    if config.inference_samples == 0 || config.inference_samples > config.inference_sweeps {
        return Err(LdaError::InvalidHyperparameter(format!(
            "inference_samples = {} with {} sweeps",
            config.inference_samples, config.inference_sweeps
        )));
    }
    Ok(())
}

fn draw(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return k;
        }
    }
    weights.len() - 1
}

/// Fits the model on development documents. Deterministic for a given document
/// order, configuration and seed.
pub fn train_lda(docs: &[TokenList], config: &LdaConfig) -> Result<TopicModel, LdaError> {
    validate(config)?;
    if docs.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    let vocab: BTreeSet<&str> = docs.iter().flat_map(|d| d.iter()).collect();
    if vocab.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    let terms: Vec<String> = vocab.into_iter().map(str::to_string).collect();
    let index: HashMap<String, usize> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    let t = config.topics;
    let v = terms.len();
    if t > v {
        log::warn!("{t} topics requested for only {v} distinct terms");
    }
    let alpha = config.alpha();
    let beta = config.beta;
    let vbeta = v as f64 * beta;

    let words: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.iter().map(|w| index[w]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut nwk = vec![0u32; v * t];
    let mut nk = vec![0u64; t];
    let mut ndk: Vec<Vec<u32>> = vec![vec![0; t]; docs.len()];
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in words.iter().enumerate() {
        let mut zd = Vec::with_capacity(doc.len());
        for &w in doc {
            let k = rng.gen_range(0..t);
            nwk[w * t + k] += 1;
            nk[k] += 1;
            ndk[d][k] += 1;
            zd.push(k);
        }
        z.push(zd);
    }

    let mut p = vec![0.0; t];
    for _ in 0..config.iterations {
        for (d, doc) in words.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                nwk[w * t + old] -= 1;
                nk[old] -= 1;
                ndk[d][old] -= 1;
                let row = &nwk[w * t..(w + 1) * t];
                for k in 0..t {
                    p[k] = (ndk[d][k] as f64 + alpha) * (row[k] as f64 + beta)
                        / (nk[k] as f64 + vbeta);
                }
                let new = draw(&p, &mut rng);
                z[d][i] = new;
                nwk[w * t + new] += 1;
                nk[new] += 1;
                ndk[d][new] += 1;
            }
        }
    }

    Ok(TopicModel {
        format_version: TOPIC_MODEL_FORMAT_VERSION,
        topics: t,
        alpha,
        beta,
        iterations: config.iterations,
        seed: config.seed,
        inference_sweeps: config.inference_sweeps,
        inference_samples: config.inference_samples,
        terms,
        word_topic_counts: nwk,
        topic_totals: nk,
        index,
    })
}

fn inference_seed(model_seed: u64, tokens: &TokenList) -> u64 {
    let mut h = Sha256::new();
    h.update(model_seed.to_le_bytes());
    for t in tokens.iter() {
        h.update(t.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Topic distribution of a document under the frozen model. Strictly positive
/// and summing to one; documents without known words return the prior.
pub fn infer_topics(tokens: &TokenList, model: &TopicModel) -> Vec<f64> {
    let t = model.topics;
    let words: Vec<usize> = tokens.iter().filter_map(|w| model.word_id(w)).collect();
    if words.is_empty() {
        return vec![1.0 / t as f64; t];
    }
    let alpha = model.alpha;
    let beta = model.beta;
    let vbeta = model.terms.len() as f64 * beta;
    // Frozen word likelihoods, one row per token.
    let likelihood: Vec<Vec<f64>> = words
        .iter()
        .map(|&w| {
            (0..t)
                .map(|k| (model.count(w, k) as f64 + beta) / (model.topic_totals[k] as f64 + vbeta))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(inference_seed(model.seed, tokens));
    let mut ndk = vec![0u32; t];
    let mut z = Vec::with_capacity(words.len());
    for _ in &words {
        let k = rng.gen_range(0..t);
        ndk[k] += 1;
        z.push(k);
    }
    let n = words.len() as f64;
    let denom = n + t as f64 * alpha;
    let burn_in = model.inference_sweeps - model.inference_samples;
    let mut theta = vec![0.0; t];
    let mut p = vec![0.0; t];
    for sweep in 0..model.inference_sweeps {
        for i in 0..words.len() {
            ndk[z[i]] -= 1;
            for k in 0..t {
                p[k] = (ndk[k] as f64 + alpha) * likelihood[i][k];
            }
            let new = draw(&p, &mut rng);
            z[i] = new;
            ndk[new] += 1;
        }
        if sweep >= burn_in {
            for k in 0..t {
                theta[k] += (ndk[k] as f64 + alpha) / denom;
            }
        }
    }
    let total: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|x| *x /= total);
    theta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(words: &[&str]) -> TokenList {
        TokenList(words.iter().map(|w| w.to_string()).collect())
    }

    fn two_group_corpus() -> Vec<TokenList> {
        let a = ["apple", "banana", "cherry", "grape", "melon"];
        let b = ["engine", "piston", "gearbox", "clutch", "brake"];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..40)
            .map(|i| {
                let pool = if i % 2 == 0 { &a } else { &b };
                TokenList(
                    (0..12)
                        .map(|_| pool[rng.gen_range(0..pool.len())].to_string())
                        .collect(),
                )
            })
            .collect()
    }

    fn small_config() -> LdaConfig {
        LdaConfig {
            alpha: Some(0.1),
            iterations: 200,
            seed: 3,
            ..LdaConfig::new(2)
        }
    }

    #[test]
    fn separates_disjoint_vocabularies() {
        let docs = two_group_corpus();
        let model = train_lda(&docs, &small_config()).unwrap();
        let dominant: Vec<usize> = docs
            .iter()
            .map(|d| {
                let th = infer_topics(d, &model);
                if th[0] >= th[1] {
                    0
                } else {
                    1
                }
            })
            .collect();
        // purity: majority topic within each group
        for group in 0..2 {
            let members: Vec<usize> = dominant
                .iter()
                .enumerate()
                .filter(|(i, _)| i % 2 == group)
                .map(|(_, &k)| k)
                .collect();
            let ones = members.iter().filter(|&&k| k == 1).count();
            let purity = ones.max(members.len() - ones) as f64 / members.len() as f64;
            assert!(purity >= 0.9, "group {group} purity {purity}");
        }
        assert_ne!(dominant[0], dominant[1]);

        let th = infer_topics(&doc(&["apple", "cherry", "melon", "grape"]), &model);
        let k = dominant[0];
        assert!(th[k] > 0.8, "{th:?}");
    }

    #[test]
    fn deterministic_given_seed() {
        let docs = two_group_corpus();
        let a = train_lda(&docs, &small_config()).unwrap();
        let b = train_lda(&docs, &small_config()).unwrap();
        assert_eq!(a.word_topic_counts, b.word_topic_counts);
        let d = doc(&["apple", "engine"]);
        assert_eq!(infer_topics(&d, &a), infer_topics(&d, &b));
    }

    #[test]
    fn single_document_corpus() {
        let docs = vec![doc(&["solo", "word", "word"])];
        let model = train_lda(
            &docs,
            &LdaConfig {
                iterations: 20,
                ..LdaConfig::new(2)
            },
        )
        .unwrap();
        let th = infer_topics(&docs[0], &model);
        assert!((th.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(th.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn empty_document_returns_prior() {
        let docs = two_group_corpus();
        let model = train_lda(&docs, &small_config()).unwrap();
        assert_eq!(infer_topics(&TokenList::default(), &model), vec![0.5, 0.5]);
        assert_eq!(infer_topics(&doc(&["unknownword"]), &model), vec![0.5, 0.5]);
    }

    #[test]
    fn error_cases() {
        assert_eq!(
            train_lda(&[], &LdaConfig::new(2)),
            Err(LdaError::EmptyCorpus)
        );
        assert_eq!(
            train_lda(&[doc(&["word"])], &LdaConfig::new(1)),
            Err(LdaError::TooFewTopics(1))
        );
        // more topics than terms proceeds
        assert!(train_lda(
            &[doc(&["word"])],
            &LdaConfig {
                iterations: 5,
                ..LdaConfig::new(4)
            }
        )
        .is_ok());
    }

    #[test]
    fn counts_are_consistent() {
        let docs = two_group_corpus();
        let model = train_lda(&docs, &small_config()).unwrap();
        let tokens: usize = docs.iter().map(|d| d.len()).sum();
        assert_eq!(model.topic_totals.iter().sum::<u64>() as usize, tokens);
        let from_rows: u64 = model.word_topic_counts.iter().map(|&c| c as u64).sum();
        assert_eq!(from_rows as usize, tokens);
        let json = serde_json::to_string(&model).unwrap();
        let back: TopicModel = serde_json::from_str(&json).unwrap();
        let d = doc(&["apple", "engine", "brake"]);
        assert_eq!(infer_topics(&d, &back), infer_topics(&d, &model));
    }
}
