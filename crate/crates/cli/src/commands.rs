//! The six subcommands.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use mmevent_core::classifiers::{ClassifierConfig, ClassifierKind};
use mmevent_core::corpus::{assign_splits, parse_metadata, read_split_table, CorpusStats, Split};
use mmevent_core::evaluation::{
    confusion_matrix, confusion_matrix_9, cross_validate_grid_search, emit_report, f1_scores,
    random_baseline, random_baseline_monte_carlo, ConfusionMatrix, EvaluationReport,
    GridSearchResult, ReportFormat, ReportMetadata,
};
use mmevent_core::fusion::{
    sha256_hex, FeatureBundle, FeatureSpec, FusionPipeline, PipelineDescriptor, Task,
    RELEVANCE_CLASSES,
};
use mmevent_core::seed::derive_seed;
use mmevent_core::{ClassLabel, Corpus, MediaRecord};
use serde::{Deserialize, Serialize};

use crate::cache::{cache_root, read_json_opt, write_atomic, write_json};
use crate::config::{BaselineMode, ExperimentConfig};
use crate::error::{config_error, data_error};
use crate::extract::{extract_feature, load_bundles, Context, ExtractSummary};

pub const PIPELINE_FILE_VERSION: u32 = 1;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// A loaded configuration with overrides applied.
#[derive(Debug, Clone)]
pub struct Session {
    pub config: ExperimentConfig,
}

impl Session {
    pub fn new(mut config: ExperimentConfig, overrides: &Overrides) -> Self {
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(w) = overrides.workers {
            config.workers = w;
        }
        if let Some(o) = &overrides.out {
            config.output = o.clone();
        }
        Self { config }
    }

    pub fn out(&self) -> &Path {
        &self.config.output
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.out().join("corpus.json")
    }

    pub fn pipeline_path(&self) -> PathBuf {
        self.out().join("pipeline.json")
    }

    /// The stored corpus and the SHA-256 of its file.
    pub fn load_corpus(&self) -> Result<(Corpus, String)> {
        let path = self.corpus_path();
        let bytes = std::fs::read(&path).map_err(|_| {
            data_error(format!(
                "no corpus store at {}; run `mmevent ingest` first",
                path.display()
            ))
        })?;
        let corpus: Corpus = serde_json::from_slice(&bytes)
            .map_err(|e| data_error(format!("{}: {e}", path.display())))?;
        Ok((corpus, sha256_hex(&bytes)))
    }

    pub fn context<'a>(&'a self, corpus: &'a Corpus, hash: &'a str) -> Context<'a> {
        Context {
            config: &self.config,
            corpus,
            corpus_hash: hash,
            cache_root: cache_root(self.out()),
            seed: self.config.seed,
        }
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone)]
pub struct IngestSummary {
    pub path: PathBuf,
    pub hash: String,
    pub records: usize,
    /// `(class, development, test)`; the last row counts unlabeled records.
    pub rows: Vec<(String, usize, usize)>,
}

pub fn ingest(session: &Session) -> Result<IngestSummary> {
    let c = &session.config.corpus;
    let format = c.metadata_format()?;
    let records = parse_metadata(&c.metadata, format)
        .map_err(|e| data_error(format!("{}: {e}", c.metadata.display())))?;
    let corpus = match &c.splits {
        Some(path) => {
            let file =
                File::open(path).map_err(|e| data_error(format!("{}: {e}", path.display())))?;
            let table = read_split_table(BufReader::new(file))
                .map_err(|e| data_error(format!("{}: {e}", path.display())))?;
            assign_splits(records, &table)
        }
        None => Corpus::from_records(records),
    }
    .map_err(|e| data_error(format!("{}: {e}", c.metadata.display())))?;

    let mut rows: Vec<(String, usize, usize)> = ClassLabel::ALL
        .iter()
        .map(|l| (l.as_str().to_string(), 0, 0))
        .collect();
    rows.push(("unlabeled".into(), 0, 0));
    for r in corpus.records() {
        let row = r.label.map_or(9, ClassLabel::index);
        match r.split {
            Some(Split::Development) => rows[row].1 += 1,
            _ => rows[row].2 += 1,
        }
    }
    if rows[9].1 + rows[9].2 == 0 {
        rows.pop();
    }

    let bytes = serde_json::to_vec(&corpus)?;
    let path = session.corpus_path();
    write_atomic(&path, &bytes)?;
    Ok(IngestSummary {
        path,
        hash: sha256_hex(&bytes),
        records: corpus.len(),
        rows,
    })
}

impl IngestSummary {
    pub fn render(&self) -> String {
        let mut s = format!("{:<15} {:>11} {:>6}\n", "class", "development", "test");
        for (c, d, t) in &self.rows {
            s.push_str(&format!("{c:<15} {d:>11} {t:>6}\n"));
        }
        let (d, t) = self
            .rows
            .iter()
            .fold((0, 0), |(a, b), (_, d, t)| (a + d, b + t));
        s.push_str(&format!("{:<15} {d:>11} {t:>6}\n", "total"));
        s.push_str(&format!("corpus store: {}\n", self.path.display()));
        s.push_str(&format!("corpus hash: {}\n", self.hash));
        s
    }
}

// ---------------------------------------------------------------- extract

pub fn extract(session: &Session, features: &[String]) -> Result<Vec<ExtractSummary>> {
    let (corpus, hash) = session.load_corpus()?;
    let ctx = session.context(&corpus, &hash);
    let names: Vec<String> = if features.is_empty() {
        session.config.features.clone()
    } else {
        for f in features {
            if !session.config.features.contains(f) {
                return Err(config_error(format!(
                    "feature `{f}` is not declared in the config (declared: {})",
                    session.config.features.join(", ")
                )));
            }
        }
        features.to_vec()
    };
    names.iter().map(|n| extract_feature(&ctx, n)).collect()
}

pub fn render_extract(summaries: &[ExtractSummary]) -> String {
    let mut s = String::new();
    for e in summaries {
        s.push_str(&format!(
            "{:<12} {}  dim {:>6}  computed {:>5}  reused {:>5}  failed {:>4}\n",
            e.feature,
            e.param_hash,
            e.dim,
            e.computed,
            e.reused,
            e.failures.len()
        ));
    }
    let failed: Vec<String> = summaries
        .iter()
        .flat_map(|e| {
            e.failures
                .iter()
                .map(move |(id, why)| format!("  {} {id}: {why}\n", e.feature))
        })
        .collect();
    if !failed.is_empty() {
        s.push_str(&format!("{} record failures:\n", failed.len()));
        s.extend(failed);
    }
    s
}

// ---------------------------------------------------------------- train

/// One feature's cache identity as recorded in a pipeline file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureProvenance {
    pub name: String,
    pub param_hash: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFile {
    pub format_version: u32,
    pub experiment: String,
    pub corpus_hash: String,
    pub training_split: String,
    pub features: Vec<FeatureProvenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSearchResult>,
    pub pipeline: FusionPipeline,
}

fn records_of(corpus: &Corpus, split: Option<Split>) -> Vec<&MediaRecord> {
    corpus
        .records()
        .iter()
        .filter(|r| split.is_none() || r.split == split)
        .collect()
}

fn labels_of(records: &[&MediaRecord], split: &str) -> Result<Vec<ClassLabel>> {
    records
        .iter()
        .map(|r| {
            r.label
                .ok_or_else(|| data_error(format!("{split} record {} has no label", r.id)))
        })
        .collect()
}

fn descriptor_for(cfg: &ExperimentConfig, classifier: ClassifierConfig) -> PipelineDescriptor {
    let features = cfg.features.iter().map(FeatureSpec::new).collect();
    let mut d = PipelineDescriptor::new(cfg.task, cfg.fusion.strategy, features, classifier)
        .with_seed(cfg.seed);
    d.groups = cfg.fusion.groups.clone();
    d.meta_classifier = cfg
        .meta_classifier()
        .with_seed(derive_seed(cfg.seed, 0x4D45_5441));
    d.meta_folds = cfg.fusion.meta_folds;
    d
}

fn relevance_classes() -> Vec<String> {
    RELEVANCE_CLASSES.iter().map(|s| s.to_string()).collect()
}

/// Confusion matrix of `pipeline` on `bundles` for the pipeline's task.
fn score(
    pipeline: &FusionPipeline,
    bundles: &[FeatureBundle],
    truth: &[ClassLabel],
) -> Result<ConfusionMatrix> {
    match pipeline.descriptor.task {
        Task::Relevance => {
            let pred = pipeline.predict_relevance(bundles)?;
            let t: Vec<usize> = truth.iter().map(|l| usize::from(l.is_event())).collect();
            let p: Vec<usize> = pred.iter().map(|&b| usize::from(b)).collect();
            Ok(confusion_matrix(&t, &p, &relevance_classes())?)
        }
        Task::Type => Ok(confusion_matrix_9(
            truth,
            &pipeline.predict_two_stage(bundles)?,
        )),
    }
}

fn stratify(task: Task, labels: &[ClassLabel]) -> Vec<usize> {
    labels
        .iter()
        .map(|l| match task {
            Task::Relevance => usize::from(l.is_event()),
            Task::Type => l.index(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub path: PathBuf,
    pub descriptor_hash: String,
    pub grid_points: usize,
    pub best: ClassifierKind,
    pub cv: Option<(f64, f64)>,
}

pub fn train(session: &Session) -> Result<TrainSummary> {
    let cfg = &session.config;
    let (corpus, hash) = session.load_corpus()?;
    let ctx = session.context(&corpus, &hash);
    let dev = records_of(&corpus, Some(Split::Development));
    if dev.is_empty() {
        return Err(data_error("development split is empty"));
    }
    let labels = labels_of(&dev, "development")?;
    let (bundles, loaded) = load_bundles(&ctx, &dev)?;
    let grid: Vec<PipelineDescriptor> = cfg
        .classifier
        .grid(cfg.seed)?
        .into_iter()
        .map(|c| descriptor_for(cfg, c))
        .collect();
    for d in &grid {
        d.validate().map_err(|e| config_error(e.to_string()))?;
    }

    let search = if grid.len() > 1 || cfg.evaluation.cross_validate {
        let strata = stratify(cfg.task, &labels);
        let result = cross_validate_grid_search(
            &strata,
            &grid,
            cfg.evaluation.folds,
            derive_seed(cfg.seed, 0x4356),
            |d, tr, te| -> Result<f64, String> {
                let tb: Vec<FeatureBundle> = tr.iter().map(|&i| bundles[i].clone()).collect();
                let tl: Vec<ClassLabel> = tr.iter().map(|&i| labels[i]).collect();
                let p = FusionPipeline::train(d, &tb, &tl).map_err(|e| e.to_string())?;
                let eb: Vec<FeatureBundle> = te.iter().map(|&i| bundles[i].clone()).collect();
                let el: Vec<ClassLabel> = te.iter().map(|&i| labels[i]).collect();
                let m = score(&p, &eb, &el).map_err(|e| e.to_string())?;
                Ok(f1_scores(&m).headline())
            },
        )
        .map_err(|e| data_error(format!("cross-validation failed: {e}")))?;
        for (d, p) in grid.iter().zip(&result.points) {
            log::info!(
                "{}: cv {:.4} +/- {:.4}",
                describe_classifier(&d.classifier.kind),
                p.mean,
                p.std
            );
        }
        Some(result)
    } else {
        None
    };
    let best = search.as_ref().map_or(0, |r| r.best);
    let descriptor = &grid[best];
    let pipeline = FusionPipeline::train(descriptor, &bundles, &labels)
        .map_err(|e| data_error(format!("training failed: {e}")))?;
    let file = PipelineFile {
        format_version: PIPELINE_FILE_VERSION,
        experiment: cfg.name.clone(),
        corpus_hash: hash.clone(),
        training_split: Split::Development.as_str().to_string(),
        features: loaded
            .iter()
            .map(|f| FeatureProvenance {
                name: f.name.clone(),
                param_hash: f.param_hash.clone(),
                dim: f.dim,
            })
            .collect(),
        grid: search.clone(),
        pipeline,
    };
    let path = session.pipeline_path();
    write_atomic(&path, serde_json::to_string(&file)?.as_bytes())?;
    if let Some(r) = &search {
        write_json(&session.out().join("grid.json"), r)?;
    }
    Ok(TrainSummary {
        path,
        descriptor_hash: file.pipeline.descriptor_hash.clone(),
        grid_points: grid.len(),
        best: descriptor.classifier.kind.clone(),
        cv: search.map(|r| (r.best_score().mean, r.best_score().std)),
    })
}

pub fn describe_classifier(kind: &ClassifierKind) -> String {
    match kind {
        ClassifierKind::LinearSvm { c } => format!("linear_svm(C={c})"),
        ClassifierKind::RbfSvm { c, gamma } => format!("rbf_svm(C={c}, gamma={gamma})"),
        ClassifierKind::Rusboost { rounds, max_depth } => {
            format!("rusboost(rounds={rounds}, max_depth={max_depth})")
        }
    }
}

// ---------------------------------------------------------------- evaluate / predict

pub fn load_pipeline(path: &Path) -> Result<PipelineFile> {
    let file: PipelineFile = read_json_opt(path)?.ok_or_else(|| {
        data_error(format!(
            "no pipeline at {}; run `mmevent train` first",
            path.display()
        ))
    })?;
    if file.format_version != PIPELINE_FILE_VERSION {
        return Err(data_error(format!(
            "{}: unsupported pipeline file version {}",
            path.display(),
            file.format_version
        )));
    }
    Ok(file)
}

/// Refuses to apply a pipeline to features it was not trained on.
fn check_provenance(ctx: &Context, file: &PipelineFile) -> Result<()> {
    let mut diff = Vec::new();
    if file.corpus_hash != ctx.corpus_hash {
        diff.push(format!(
            "corpus hash: pipeline {} vs current {}",
            file.corpus_hash, ctx.corpus_hash
        ));
    }
    let want: Vec<&str> = file.features.iter().map(|f| f.name.as_str()).collect();
    let have: Vec<&str> = ctx.config.features.iter().map(String::as_str).collect();
    if want != have {
        diff.push(format!(
            "features: pipeline [{}] vs config [{}]",
            want.join(", "),
            have.join(", ")
        ));
    } else {
        for f in &file.features {
            let key = ctx.key(&f.name)?;
            if key.hash != f.param_hash {
                diff.push(format!(
                    "feature `{}` hash: pipeline {} vs config {}",
                    f.name, f.param_hash, key.hash
                ));
            }
        }
    }
    if diff.is_empty() {
        Ok(())
    } else {
        Err(config_error(format!(
            "pipeline provenance does not match the current configuration:\n  {}",
            diff.join("\n  ")
        )))
    }
}

fn parse_split(split: &str) -> Result<Option<Split>> {
    match split {
        "all" => Ok(None),
        s => s
            .parse::<Split>()
            .map(Some)
            .map_err(|e| config_error(e.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub report: EvaluationReport,
    pub written: Vec<PathBuf>,
}

pub fn evaluate(session: &Session, pipeline_path: &Path, split: &str) -> Result<EvaluateSummary> {
    let cfg = &session.config;
    let (corpus, hash) = session.load_corpus()?;
    let ctx = session.context(&corpus, &hash);
    let file = load_pipeline(pipeline_path)?;
    check_provenance(&ctx, &file)?;
    let split = parse_split(split)?;
    let records = records_of(&corpus, split);
    if records.is_empty() {
        return Err(data_error("evaluation split is empty"));
    }
    let split_name = split.map_or("all", Split::as_str);
    let truth = labels_of(&records, split_name)?;
    let (bundles, _) = load_bundles(&ctx, &records)?;
    let matrix = score(&file.pipeline, &bundles, &truth)?;

    let mut counts = [0u64; 9];
    for l in &truth {
        counts[l.index()] += 1;
    }
    let stats = CorpusStats::from_counts(counts);
    let priors: Vec<f64> = match file.pipeline.descriptor.task {
        Task::Relevance => {
            let (n, e) = stats.binary_priors();
            vec![n, e]
        }
        Task::Type => stats.priors.to_vec(),
    };
    let baseline = match cfg.evaluation.baseline {
        BaselineMode::Analytic => random_baseline(&priors),
        BaselineMode::MonteCarlo => random_baseline_monte_carlo(
            &priors,
            cfg.evaluation.baseline_draws,
            derive_seed(cfg.seed, 0xBA5E),
        ),
    }
    .map_err(|e| data_error(e.to_string()))?;

    let d = &file.pipeline.descriptor;
    let metadata = ReportMetadata {
        experiment: file.experiment.clone(),
        task: d.task.as_str().to_string(),
        features: d.feature_names(),
        classifier: describe_classifier(&d.classifier.kind),
        fusion: d.strategy.as_str().to_string(),
        seeds: vec![d.seed],
        split: split_name.to_string(),
        pipeline_hash: file.pipeline.descriptor_hash.clone(),
    };
    let report = EvaluationReport::new(metadata, matrix).with_baseline(baseline);
    let mut written = Vec::new();
    for &format in &cfg.evaluation.formats {
        let path = session.out().join(format!("report.{}", format.extension()));
        emit_report(&report, format, &path)
            .map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
        written.push(path);
    }
    Ok(EvaluateSummary { report, written })
}

pub fn headline(report: &EvaluationReport) -> String {
    let s = &report.scores;
    let (name, value, base) = match (s.f1_ene_avg, s.f1_type_avg) {
        (Some(v), _) => (
            "f1_ene_avg",
            v,
            report.baseline.as_ref().and_then(|b| b.f1_ene_avg),
        ),
        (_, Some(v)) => (
            "f1_type_avg",
            v,
            report.baseline.as_ref().and_then(|b| b.f1_type_avg),
        ),
        _ => ("macro_f1", s.macro_f1, None),
    };
    match base {
        Some(b) => format!("{name} = {value:.4} (random baseline {b:.4})"),
        None => format!("{name} = {value:.4}"),
    }
}

pub fn predict(
    session: &Session,
    pipeline_path: &Path,
    split: &str,
    output: Option<&Path>,
) -> Result<(PathBuf, usize)> {
    let (corpus, hash) = session.load_corpus()?;
    let ctx = session.context(&corpus, &hash);
    let file = load_pipeline(pipeline_path)?;
    check_provenance(&ctx, &file)?;
    let records = records_of(&corpus, parse_split(split)?);
    let (bundles, _) = load_bundles(&ctx, &records)?;
    let predicted: Vec<String> = match file.pipeline.descriptor.task {
        Task::Relevance => file
            .pipeline
            .predict_relevance(&bundles)?
            .into_iter()
            .map(|b| RELEVANCE_CLASSES[usize::from(b)].to_string())
            .collect(),
        Task::Type => file
            .pipeline
            .predict_two_stage(&bundles)?
            .into_iter()
            .map(|l| l.as_str().to_string())
            .collect(),
    };
    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| session.out().join("predictions.csv"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "split", "predicted", "truth"])?;
    for (r, p) in records.iter().zip(&predicted) {
        let truth = match (r.label, file.pipeline.descriptor.task) {
            (None, _) => String::new(),
            (Some(l), Task::Relevance) => RELEVANCE_CLASSES[usize::from(l.is_event())].to_string(),
            (Some(l), Task::Type) => l.as_str().to_string(),
        };
        w.write_record([
            r.id.as_str(),
            r.split.map_or("", Split::as_str),
            p.as_str(),
            truth.as_str(),
        ])?;
    }
    let bytes = w.into_inner().context("flushing predictions")?;
    write_atomic(&path, &bytes)?;
    Ok((path, records.len()))
}

// ---------------------------------------------------------------- report

pub fn report(input: &Path, format: ReportFormat) -> Result<String> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| data_error(format!("{}: {e}", input.display())))?;
    let report = EvaluationReport::from_json(&text)
        .map_err(|e| data_error(format!("{}: {e}", input.display())))?;
    Ok(report.render(format))
}
