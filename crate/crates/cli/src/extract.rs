//! Per-feature extraction into the cache, and loading cached features back.

use std::path::PathBuf;

use anyhow::Result;
use mmevent_core::corpus::Split;
use mmevent_core::encoding::{
    apply_pca, encode_bow_hard, encode_vlad, fit_pca, kmeans_codebook, sample_descriptors_with,
    Codebook, KMeansConfig, PcaModel, SampleConfig,
};
use mmevent_core::fusion::FeatureBundle;
use mmevent_core::seed::derive_seed;
use mmevent_core::text::{
    build_vocabulary, preprocess, tfidf_vector, topic_feature, train_lda, LdaConfig, StopWords,
    TokenList, TopicModel, Vocabulary,
};
use mmevent_core::visual::{
    dense_sift, gist_descriptor, sparse_sift, standardize_image, DenseSiftConfig, GaborBank,
    LocalDescriptorSet, SiftConfig, StandardImage,
};
use mmevent_core::{ClassLabel, Corpus, FeatureVector, MediaRecord, SparseVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{
    encode_descriptors, encode_vector, param_hash, read_descriptors, read_json_opt, read_vector,
    write_atomic, write_json, Failures, FeatureDir, Manifest,
};
use crate::config::{DescriptorMode, ExperimentConfig, LocalParams, ResolvedFeature};
use crate::error::{config_error, data_error};

/// Everything extraction needs besides the feature parameters.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub corpus: &'a Corpus,
    pub corpus_hash: &'a str,
    pub cache_root: PathBuf,
    pub seed: u64,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    feature: &'a ResolvedFeature,
    image_size: Option<usize>,
    corpus_hash: Option<&'a str>,
    seed: Option<u64>,
    stopwords: Option<&'a str>,
}

/// Identity of one configured feature in the cache.
#[derive(Debug, Clone)]
pub struct FeatureKey {
    pub name: String,
    pub feature: ResolvedFeature,
    pub hash: String,
    pub dir: FeatureDir,
}

impl Context<'_> {
    pub fn key(&self, name: &str) -> Result<FeatureKey> {
        let feature = self.config.resolved_feature(name)?;
        let fitted = !matches!(feature, ResolvedFeature::Gist { .. });
        let seeded = matches!(
            feature,
            ResolvedFeature::Topics { .. }
                | ResolvedFeature::Bow { .. }
                | ResolvedFeature::Vlad { .. }
        );
        let stopwords = StopWords::bundled();
        let material = KeyMaterial {
            feature: &feature,
            image_size: feature
                .extractor()
                .is_visual()
                .then_some(self.config.corpus.image_size),
            corpus_hash: fitted.then_some(self.corpus_hash),
            seed: seeded.then_some(self.seed),
            stopwords: (!feature.extractor().is_visual()).then(|| stopwords.version()),
        };
        let hash = param_hash(&material);
        Ok(FeatureKey {
            name: name.to_string(),
            dir: FeatureDir::new(&self.cache_root, name, &hash),
            feature,
            hash,
        })
    }

    fn dev_records(&self) -> Vec<&MediaRecord> {
        self.corpus.split(Split::Development).collect()
    }

    fn image_path(&self, r: &MediaRecord) -> Option<PathBuf> {
        r.image_path
            .as_ref()
            .map(|p| self.config.corpus.image_root().join(p))
    }

    fn load_image(&self, r: &MediaRecord) -> Result<StandardImage, String> {
        let path = self
            .image_path(r)
            .ok_or_else(|| "record has no image path".to_string())?;
        let bytes = std::fs::read(&path)
            .map_err(|e| format!("cannot read image {}: {e}", path.display()))?;
        standardize_image(&bytes, &r.id, self.config.corpus.image_size).map_err(|e| e.to_string())
    }

    /// Raw GIST, cached under `_gist` so `gist` and `pca_gist` share it.
    fn raw_gist(
        &self,
        bank: &GaborBank,
        blocks: usize,
        r: &MediaRecord,
    ) -> Result<FeatureVector, String> {
        let dir = FeatureDir::new(
            &self.cache_root,
            "_gist",
            &param_hash(&(blocks, self.config.corpus.image_size)),
        );
        let path = dir.vector_path(&r.id);
        if let Ok(v) = read_vector(&path) {
            return Ok(v);
        }
        let img = self.load_image(r)?;
        let v = gist_descriptor(&img, blocks, bank).map_err(|e| e.to_string())?;
        write_atomic(&path, &encode_vector(&v)).map_err(|e| e.to_string())?;
        Ok(v)
    }

    fn descriptors(
        &self,
        local: &LocalParams,
        r: &MediaRecord,
    ) -> Result<LocalDescriptorSet, String> {
        let dir = FeatureDir::new(
            &self.cache_root,
            "_descriptors",
            &param_hash(&(local, self.config.corpus.image_size)),
        );
        let path = dir.vector_path(&r.id);
        if let Ok(set) = read_descriptors(&path) {
            return Ok(set);
        }
        let img = self.load_image(r)?;
        let set = match local.mode {
            DescriptorMode::Sparse => sparse_sift(&img, &SiftConfig::default()),
            DescriptorMode::Dense => dense_sift(
                &img,
                &DenseSiftConfig {
                    step: local.step,
                    patch: local.patch,
                },
            )
            .map_err(|e| e.to_string())?,
        };
        write_atomic(&path, &encode_descriptors(&set)).map_err(|e| e.to_string())?;
        Ok(set)
    }
}

fn tokens(r: &MediaRecord, stop: &StopWords) -> TokenList {
    preprocess(r.title.as_deref(), &r.tags, stop)
}

/// A fitted extractor ready to map records to vectors.
enum Extractor {
    Tfidf(Vocabulary, StopWords),
    Topics(TopicModel, StopWords),
    Gist {
        bank: GaborBank,
        blocks: usize,
    },
    PcaGist {
        bank: GaborBank,
        blocks: usize,
        pca: PcaModel,
    },
    Bow {
        local: LocalParams,
        codebook: Codebook,
    },
    Vlad {
        local: LocalParams,
        codebook: Codebook,
        feature: ResolvedFeature,
    },
}

fn fit_or_load<T, F>(dir: &FeatureDir, fit: F) -> Result<T>
where
    T: Serialize + serde::de::DeserializeOwned,
    F: FnOnce() -> Result<T>,
{
    if let Some(model) = read_json_opt(&dir.model_path())? {
        return Ok(model);
    }
    let model = fit()?;
    write_json(&dir.model_path(), &model)?;
    Ok(model)
}

fn gist_bank(ctx: &Context, blocks: usize) -> Result<GaborBank> {
    let size = ctx.config.corpus.image_size;
    if !size.is_multiple_of(blocks) {
        return Err(config_error(format!(
            "gist blocks = {blocks} does not divide image_size = {size}"
        )));
    }
    Ok(GaborBank::standard(size))
}

fn prepare(ctx: &Context, key: &FeatureKey) -> Result<Extractor> {
    let stop = StopWords::bundled();
    let dir = &key.dir;
    let salt = u64::from_str_radix(&param_hash(&key.name), 16).expect("hex digest");
    let seed = derive_seed(ctx.seed, salt);
    Ok(match &key.feature {
        ResolvedFeature::Tfidf { terms } => {
            let mut vocab: Vocabulary = fit_or_load(dir, || {
                let docs: Vec<TokenList> =
                    ctx.dev_records().iter().map(|r| tokens(r, &stop)).collect();
                Ok(build_vocabulary(&docs, *terms))
            })?;
            vocab.rebuild_index();
            if vocab.is_empty() {
                return Err(data_error(
                    "development split has no usable text; tfidf vocabulary is empty",
                ));
            }
            Extractor::Tfidf(vocab, stop)
        }
        ResolvedFeature::Topics {
            topics,
            iterations,
            alpha,
            beta,
        } => {
            let mut model: TopicModel = fit_or_load(dir, || {
                let docs: Vec<TokenList> =
                    ctx.dev_records().iter().map(|r| tokens(r, &stop)).collect();
                let cfg = LdaConfig {
                    alpha: *alpha,
                    beta: *beta,
                    iterations: *iterations,
                    seed,
                    ..LdaConfig::new(*topics)
                };
                train_lda(&docs, &cfg).map_err(|e| data_error(format!("topic model: {e}")))
            })?;
            model.rebuild_index();
            Extractor::Topics(model, stop)
        }
        ResolvedFeature::Gist { blocks } => Extractor::Gist {
            bank: gist_bank(ctx, *blocks)?,
            blocks: *blocks,
        },
        ResolvedFeature::PcaGist { blocks, variance } => {
            let bank = gist_bank(ctx, *blocks)?;
            let pca: PcaModel = fit_or_load(dir, || {
                let dev = ctx.dev_records();
                let rows: Vec<Vec<f64>> = dev
                    .par_iter()
                    .filter_map(|r| ctx.raw_gist(&bank, *blocks, r).ok())
                    .map(|v| v.to_dense())
                    .collect();
                fit_pca(&rows, *variance).map_err(|e| data_error(format!("pca_gist: {e}")))
            })?;
            Extractor::PcaGist {
                bank,
                blocks: *blocks,
                pca,
            }
        }
        ResolvedFeature::Bow {
            k,
            descriptors,
            sample,
        }
        | ResolvedFeature::Vlad {
            k,
            descriptors,
            sample,
            ..
        } => {
            let codebook: Codebook = fit_or_load(dir, || {
                let dev = ctx.dev_records();
                let labeled: Vec<&MediaRecord> =
                    dev.into_iter().filter(|r| r.label.is_some()).collect();
                let labels: Vec<ClassLabel> = labeled.iter().map(|r| r.label.unwrap()).collect();
                let cfg = SampleConfig {
                    images_per_class: sample.images_per_class,
                    max_descriptors_per_image: sample.max_descriptors_per_image,
                    seed,
                };
                let drawn = sample_descriptors_with(&labels, &cfg, |i| {
                    Ok::<_, std::convert::Infallible>(
                        ctx.descriptors(descriptors, labeled[i]).unwrap_or_default(),
                    )
                })
                .unwrap_or_else(|e| match e {});
                let km = KMeansConfig {
                    restarts: sample.restarts,
                    max_iter: sample.max_iter,
                    ..KMeansConfig::new(*k, seed)
                };
                kmeans_codebook(&drawn, &km).map_err(|e| {
                    data_error(format!(
                        "feature `{}`: codebook training failed: {e}; raise images_per_class or lower k",
                        key.name
                    ))
                })
            })?;
            match &key.feature {
                ResolvedFeature::Bow { .. } => Extractor::Bow {
                    local: descriptors.clone(),
                    codebook,
                },
                other => Extractor::Vlad {
                    local: descriptors.clone(),
                    codebook,
                    feature: other.clone(),
                },
            }
        }
    })
}

impl Extractor {
    fn compute(&self, ctx: &Context, r: &MediaRecord) -> Result<FeatureVector, String> {
        match self {
            Extractor::Tfidf(vocab, stop) => Ok(tfidf_vector(&tokens(r, stop), vocab)),
            Extractor::Topics(model, stop) => topic_feature(&tokens(r, stop), model)
                .map(FeatureVector::normalized)
                .map_err(|e| e.to_string()),
            Extractor::Gist { bank, blocks } => ctx.raw_gist(bank, *blocks, r),
            Extractor::PcaGist { bank, blocks, pca } => {
                let raw = ctx.raw_gist(bank, *blocks, r)?;
                apply_pca(&raw, pca).map_err(|e| e.to_string())
            }
            Extractor::Bow { local, codebook } => {
                let set = ctx.descriptors(local, r)?;
                encode_bow_hard(&set, codebook).map_err(|e| e.to_string())
            }
            Extractor::Vlad {
                local,
                codebook,
                feature,
            } => {
                let set = ctx.descriptors(local, r)?;
                let norm = match feature {
                    ResolvedFeature::Vlad { normalization, .. } => *normalization,
                    _ => unreachable!("vlad extractor carries vlad parameters"),
                };
                encode_vlad(&set, codebook, norm).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtractSummary {
    pub feature: String,
    pub param_hash: String,
    pub dim: usize,
    pub computed: usize,
    pub reused: usize,
    pub failures: Vec<(String, String)>,
}

/// Fills the cache for one feature. Records that already have a vector are
/// skipped; records that fail are listed and the run continues.
pub fn extract_feature(ctx: &Context, name: &str) -> Result<ExtractSummary> {
    let key = ctx.key(name)?;
    let records = ctx.corpus.records();
    let pending: Vec<&MediaRecord> = records
        .iter()
        .filter(|r| !key.dir.vector_path(&r.id).exists())
        .collect();
    let reused = records.len() - pending.len();
    let mut failures = Failures::default();
    let manifest = key.dir.read_manifest()?;
    if pending.is_empty() {
        if let Some(m) = manifest {
            return Ok(ExtractSummary {
                feature: key.name,
                param_hash: key.hash,
                dim: m.dim,
                computed: 0,
                reused,
                failures: Vec::new(),
            });
        }
    }
    let extractor = prepare(ctx, &key)?;
    let results: Vec<(String, Result<FeatureVector, String>)> = pending
        .par_iter()
        .map(|r| {
            let out = extractor.compute(ctx, r).and_then(|v| {
                write_atomic(&key.dir.vector_path(&r.id), &encode_vector(&v))
                    .map_err(|e| e.to_string())?;
                Ok(v)
            });
            (r.id.clone(), out)
        })
        .collect();

    let mut dim = manifest.as_ref().map(|m| m.dim);
    let mut computed = 0;
    for (id, res) in results {
        match res {
            Ok(v) => {
                computed += 1;
                match dim {
                    None => dim = Some(v.dim()),
                    Some(d) if d != v.dim() => {
                        return Err(anyhow::anyhow!(
                            "feature `{name}`: record {id} has dimension {} instead of {d}",
                            v.dim()
                        ))
                    }
                    _ => {}
                }
            }
            Err(reason) => {
                failures.records.insert(id, reason);
            }
        }
    }
    let dim = match dim {
        Some(d) => d,
        None => {
            return Err(data_error(format!(
                "feature `{name}` failed for every record; first failure: {}",
                failures
                    .records
                    .values()
                    .next()
                    .map_or("none", String::as_str)
            )))
        }
    };
    write_json(&key.dir.failures_path(), &failures)?;
    write_json(
        &key.dir.manifest_path(),
        &Manifest {
            feature: key.name.clone(),
            param_hash: key.hash.clone(),
            params: serde_json::to_value(&key.feature)?,
            corpus_hash: ctx.corpus_hash.to_string(),
            dim,
            records: records.len() - failures.records.len(),
            failures: failures.records.len(),
        },
    )?;
    Ok(ExtractSummary {
        feature: key.name,
        param_hash: key.hash,
        dim,
        computed,
        reused,
        failures: failures.records.into_iter().collect(),
    })
}

/// Cached feature of one name, provenance included.
#[derive(Debug, Clone)]
pub struct LoadedFeature {
    pub name: String,
    pub param_hash: String,
    pub dim: usize,
    pub vectors: Vec<FeatureVector>,
}

fn missing_cache(name: &str, detail: &str) -> anyhow::Error {
    data_error(format!(
        "feature `{name}` is not cached for the current configuration ({detail}); run `mmevent extract --features {name}` first"
    ))
}

/// Loads one cached feature for `records`. Records whose extraction failed
/// get an all-zero vector.
pub fn load_feature(ctx: &Context, name: &str, records: &[&MediaRecord]) -> Result<LoadedFeature> {
    let key = ctx.key(name)?;
    let manifest = key
        .dir
        .read_manifest()?
        .ok_or_else(|| missing_cache(name, "no manifest"))?;
    let failures = key.dir.read_failures()?;
    let sparse_zero = matches!(key.feature, ResolvedFeature::Tfidf { .. });
    let vectors = records
        .par_iter()
        .map(|r| {
            let path = key.dir.vector_path(&r.id);
            if path.exists() {
                let v = read_vector(&path)?;
                if v.dim() != manifest.dim {
                    return Err(data_error(format!(
                        "{}: dimension {} does not match manifest dimension {}",
                        path.display(),
                        v.dim(),
                        manifest.dim
                    )));
                }
                Ok(v)
            } else if failures.records.contains_key(&r.id) {
                Ok(if sparse_zero {
                    FeatureVector::Sparse(SparseVector::zeros(manifest.dim))
                } else {
                    FeatureVector::zeros_dense(manifest.dim)
                })
            } else {
                Err(missing_cache(
                    name,
                    &format!("record {} has no vector", r.id),
                ))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedFeature {
        name: key.name,
        param_hash: key.hash,
        dim: manifest.dim,
        vectors,
    })
}

/// Feature bundles for `records` in the configured feature order.
pub fn load_bundles(
    ctx: &Context,
    records: &[&MediaRecord],
) -> Result<(Vec<FeatureBundle>, Vec<LoadedFeature>)> {
    let mut loaded = Vec::new();
    for name in &ctx.config.features {
        loaded.push(load_feature(ctx, name, records)?);
    }
    let bundles = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut b = FeatureBundle::new(r.id.clone());
            for f in &loaded {
                b.insert(f.name.clone(), f.vectors[i].clone());
            }
            b
        })
        .collect();
    for f in &mut loaded {
        f.vectors = Vec::new();
    }
    Ok((bundles, loaded))
}
