//! Evaluation reports in JSON, CSV and plain-text table form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{f1_scores, BaselineScores, ConfusionMatrix, EvaluationError, F1Scores};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Column order of CSV reports.
pub const CSV_COLUMNS: [&str; 6] = ["kind", "name", "precision", "recall", "f1", "support"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Text];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Text => "txt",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = EvaluationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" | "table" => Ok(ReportFormat::Text),
            other => Err(EvaluationError::InvalidParameter(format!(
                "unknown report format `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub experiment: String,
    /// `relevance` or `type`.
    pub task: String,
    pub features: Vec<String>,
    pub classifier: String,
    pub fusion: String,
    pub seeds: Vec<u64>,
    pub split: String,
    /// SHA-256 of the pipeline descriptor that produced the predictions.
    pub pipeline_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub confusion: ConfusionMatrix,
    pub scores: F1Scores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineScores>,
}

impl EvaluationReport {
    pub fn new(metadata: ReportMetadata, confusion: ConfusionMatrix) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            metadata,
            scores: f1_scores(&confusion),
            confusion,
            baseline: None,
        }
    }

    pub fn with_baseline(mut self, baseline: BaselineScores) -> Self {
        self.baseline = Some(baseline);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EvaluationError> {
        Ok(serde_json::from_str(text)?)
    }

    fn aggregate_rows(&self) -> Vec<(&'static str, f64)> {
        let s = &self.scores;
        let mut rows = vec![("accuracy", s.accuracy), ("macro_f1", s.macro_f1)];
        if let Some(v) = s.f1_ene_avg {
            rows.push(("f1_ene_avg", v));
        }
        if let Some(v) = s.f1_type_avg {
            rows.push(("f1_type_avg", v));
        }
        rows
    }

    /// One row per class followed by one row per aggregate.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for c in &self.scores.per_class {
            w.write_record([
                "class".to_string(),
                c.class.clone(),
                c.precision.to_string(),
                c.recall.to_string(),
                c.f1.to_string(),
                c.support.to_string(),
            ])
            .expect("in-memory write");
        }
        let total = self.confusion.total().to_string();
        for (name, v) in self.aggregate_rows() {
            w.write_record(["aggregate", name, "", "", &v.to_string(), &total])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_text(&self) -> String {
        let m = &self.metadata;
        let mut out = String::new();
        let _ = writeln!(out, "experiment: {}", m.experiment);
        let _ = writeln!(out, "task:       {}", m.task);
        let _ = writeln!(out, "features:   {}", m.features.join(" + "));
        let _ = writeln!(out, "classifier: {}", m.classifier);
        let _ = writeln!(out, "fusion:     {}", m.fusion);
        let _ = writeln!(out, "split:      {}", m.split);
        let _ = writeln!(out, "pipeline:   {}", m.pipeline_hash);
        let _ = writeln!(out);
        let width = self
            .scores
            .per_class
            .iter()
            .map(|c| c.class.len())
            .chain(["f1_type_avg".len()])
            .max()
            .unwrap_or(0);
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}",
            "class", "precision", "recall", "f1", "support"
        );
        let _ = writeln!(out, "{}", "-".repeat(width + 44));
        for c in &self.scores.per_class {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>8}",
                c.class, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(out, "{}", "-".repeat(width + 44));
        for (name, v) in self.aggregate_rows() {
            let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9.4}", name, "", "", v);
        }
        if let Some(b) = &self.baseline {
            if let Some(v) = b.f1_ene_avg.or(b.f1_type_avg) {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>9}  {:>9}  {:>9.4}",
                    "random", "", "", v
                );
            }
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Text => self.to_text(),
        }
    }
}

/// Writes the report to `path` in the given format.
pub fn emit_report(
    report: &EvaluationReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), EvaluationError> {
    std::fs::write(path, report.render(format)).map_err(|source| EvaluationError::Io {
        path: path.display().to_string(),
        source,
    })
}
