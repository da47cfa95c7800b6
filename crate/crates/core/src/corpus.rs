//! Dataset metadata, ground truth and development/test splits.
//!
//! Metadata is read from CSV (`id,title,tags,user,timestamp,lat,lon,image_path,label,split`,
//! tags separated by `|`) or JSON-lines with the same field names. Empty CSV cells and
//! omitted JSON fields become absent values.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("split table references unknown ids: {}", .0.join(", "))]
    UnknownIds(Vec<String>),
    #[error("records without a split assignment: {}", .0.join(", "))]
    Unassigned(Vec<String>),
    #[error("record `{0}` in the requested split has no label")]
    Unlabeled(String),
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
    #[error("unknown split `{0}`")]
    UnknownSplit(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// The nine SED 2013 classes, in the fixed order used for every tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    NonEvent,
    Concert,
    Conference,
    Exhibition,
    Fashion,
    Protest,
    Sports,
    TheaterDance,
    Other,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 9] = [
        ClassLabel::NonEvent,
        ClassLabel::Concert,
        ClassLabel::Conference,
        ClassLabel::Exhibition,
        ClassLabel::Fashion,
        ClassLabel::Protest,
        ClassLabel::Sports,
        ClassLabel::TheaterDance,
        ClassLabel::Other,
    ];

    /// The eight event types (everything except `non_event`).
    pub const EVENT_TYPES: [ClassLabel; 8] = [
        ClassLabel::Concert,
        ClassLabel::Conference,
        ClassLabel::Exhibition,
        ClassLabel::Fashion,
        ClassLabel::Protest,
        ClassLabel::Sports,
        ClassLabel::TheaterDance,
        ClassLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<ClassLabel> {
        Self::ALL.get(index).copied()
    }

    pub fn is_event(self) -> bool {
        self != ClassLabel::NonEvent
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::NonEvent => "non_event",
            ClassLabel::Concert => "concert",
            ClassLabel::Conference => "conference",
            ClassLabel::Exhibition => "exhibition",
            ClassLabel::Fashion => "fashion",
            ClassLabel::Protest => "protest",
            ClassLabel::Sports => "sports",
            ClassLabel::TheaterDance => "theater_dance",
            ClassLabel::Other => "other",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == norm || (norm == "nonevent" && *c == ClassLabel::NonEvent))
            .ok_or_else(|| CorpusError::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Development,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Development => "development",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "development" | "dev" | "train" => Ok(Split::Development),
            "test" => Ok(Split::Test),
            _ => Err(CorpusError::UnknownSplit(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// One image with its contextual metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default)]
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
    #[serde(default, flatten, skip_serializing_if = "Option::is_none")]
    pub geo: Option<GeoPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ClassLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl MediaRecord {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: None,
            tags: Vec::new(),
            user: String::new(),
            timestamp: None,
            geo: None,
            image_path: None,
            label: None,
            split: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataFormat {
    Csv,
    JsonLines,
}

impl MetadataFormat {
    /// Guesses the format from a file extension (`.jsonl`/`.json` vs anything else).
    pub fn from_path(path: &Path) -> MetadataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => MetadataFormat::JsonLines,
            _ => MetadataFormat::Csv,
        }
    }
}

impl FromStr for MetadataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(MetadataFormat::Csv),
            "jsonl" | "json-lines" | "json_lines" => Ok(MetadataFormat::JsonLines),
            other => Err(format!("unknown metadata format `{other}`")),
        }
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "id",
    "title",
    "tags",
    "user",
    "timestamp",
    "lat",
    "lon",
    "image_path",
    "label",
    "split",
];

pub fn parse_metadata(path: &Path, format: MetadataFormat) -> Result<Vec<MediaRecord>> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_metadata(BufReader::new(file), format)
}

pub fn read_metadata<R: Read>(reader: R, format: MetadataFormat) -> Result<Vec<MediaRecord>> {
    let records = match format {
        MetadataFormat::Csv => read_csv(reader)?,
        MetadataFormat::JsonLines => read_jsonl(reader)?,
    };
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(CorpusError::DuplicateId(r.id.clone()));
        }
    }
    Ok(records)
}

fn non_empty(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| s.to_string())
}

fn parse_opt<T: FromStr>(value: &str, line: usize, column: &str) -> Result<Option<T>> {
    let t = value.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse().map(Some).map_err(|_| CorpusError::Malformed {
        line,
        message: format!("invalid {column} `{t}`"),
    })
}

fn read_csv<R: Read>(reader: R) -> Result<Vec<MediaRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("id").ok_or(CorpusError::Malformed {
        line: 1,
        message: "missing `id` column".into(),
    })?;
    let cols: Vec<Option<usize>> = CSV_HEADER.iter().map(|h| col(h)).collect();

    let mut out = Vec::new();
    for (row_idx, row) in rdr.records().enumerate() {
        // header is line 1
        let line = row_idx + 2;
        let row = row.map_err(|e| CorpusError::Malformed {
            line: e.position().map(|p| p.line() as usize).unwrap_or(line),
            message: e.to_string(),
        })?;
        let field = |k: usize| cols[k].and_then(|c| row.get(c)).unwrap_or("");
        let id = row.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::Malformed {
                line,
                message: "empty id".into(),
            });
        }
        let tags = field(2)
            .split('|')
            .filter(|t| !t.trim().is_empty())
            .map(str::to_string)
            .collect();
        let lat: Option<f64> = parse_opt(field(5), line, "lat")?;
        let lon: Option<f64> = parse_opt(field(6), line, "lon")?;
        let geo = match (lat, lon) {
            (Some(lat), Some(lon)) => Some(GeoPoint { lat, lon }),
            (None, None) => None,
            _ => {
                return Err(CorpusError::Malformed {
                    line,
                    message: "lat and lon must be given together".into(),
                })
            }
        };
        let label = match non_empty(field(8)) {
            Some(l) if l.trim().eq_ignore_ascii_case("unlabeled") => None,
            Some(l) => Some(
                l.parse::<ClassLabel>()
                    .map_err(|e| CorpusError::Malformed {
                        line,
                        message: e.to_string(),
                    })?,
            ),
            None => None,
        };
        let split = match non_empty(field(9)) {
            Some(s) => Some(s.parse::<Split>().map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?),
            None => None,
        };
        out.push(MediaRecord {
            id,
            title: non_empty(field(1)),
            tags,
            user: field(3).to_string(),
            timestamp: parse_opt(field(4), line, "timestamp")?,
            geo,
            image_path: non_empty(field(7)),
            label,
            split,
        });
    }
    Ok(out)
}

fn read_jsonl<R: Read>(reader: R) -> Result<Vec<MediaRecord>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MediaRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        if record.id.trim().is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: "empty id".into(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Writes records in the given format; the inverse of [`read_metadata`].
pub fn write_metadata<W: Write>(
    writer: W,
    records: &[MediaRecord],
    format: MetadataFormat,
) -> std::io::Result<()> {
    match format {
        MetadataFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(CSV_HEADER)?;
            for r in records {
                let opt = |v: Option<String>| v.unwrap_or_default();
                w.write_record([
                    r.id.clone(),
                    opt(r.title.clone()),
                    r.tags.join("|"),
                    r.user.clone(),
                    opt(r.timestamp.map(|t| t.to_string())),
                    opt(r.geo.map(|g| g.lat.to_string())),
                    opt(r.geo.map(|g| g.lon.to_string())),
                    opt(r.image_path.clone()),
                    opt(r.label.map(|l| l.to_string())),
                    opt(r.split.map(|s| s.to_string())),
                ])?;
            }
            w.flush()
        }
        MetadataFormat::JsonLines => {
            let mut w = std::io::BufWriter::new(writer);
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()
        }
    }
}

/// Reads a two-column `id,split` table (header optional).
pub fn read_split_table<R: Read>(reader: R) -> Result<HashMap<String, Split>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut table = HashMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 1;
        let row = row.map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        let (id, split) = (
            row.get(0).unwrap_or("").trim(),
            row.get(1).unwrap_or("").trim(),
        );
        if line == 1 && id == "id" {
            continue;
        }
        let split = split
            .parse()
            .map_err(|e: CorpusError| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
        table.insert(id.to_string(), split);
    }
    Ok(table)
}

/// An immutable, id-unique collection of records that all carry a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    records: Vec<MediaRecord>,
}

impl Corpus {
    /// Builds a corpus from records whose split is already set.
    pub fn from_records(records: Vec<MediaRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        let missing: Vec<String> = records
            .iter()
            .filter(|r| r.split.is_none())
            .map(|r| r.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(CorpusError::Unassigned(missing));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[MediaRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MediaRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &MediaRecord> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

/// Attaches the split from `table` to every record. Every record must appear in
/// the table and every table id must name a record.
pub fn assign_splits(
    mut records: Vec<MediaRecord>,
    table: &HashMap<String, Split>,
) -> Result<Corpus> {
    let ids: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut unknown: Vec<String> = table
        .keys()
        .filter(|id| !ids.contains(id.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(CorpusError::UnknownIds(unknown));
    }
    let mut missing = Vec::new();
    for r in &mut records {
        match table.get(&r.id) {
            Some(&s) => r.split = Some(s),
            None => missing.push(r.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(CorpusError::Unassigned(missing));
    }
    Corpus::from_records(records)
}

/// Per-class counts and priors of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub counts: [u64; 9],
    pub priors: [f64; 9],
}

impl CorpusStats {
    pub fn from_counts(counts: [u64; 9]) -> Self {
        let total: u64 = counts.iter().sum();
        let mut priors = [0.0; 9];
        if total > 0 {
            for (p, &c) in priors.iter_mut().zip(&counts) {
                *p = c as f64 / total as f64;
            }
        }
        Self { counts, priors }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, label: ClassLabel) -> u64 {
        self.counts[label.index()]
    }

    pub fn prior(&self, label: ClassLabel) -> f64 {
        self.priors[label.index()]
    }

    /// `(non_event, event)` priors with all event types pooled.
    pub fn binary_priors(&self) -> (f64, f64) {
        let non = self.prior(ClassLabel::NonEvent);
        (non, 1.0 - non)
    }
}

pub fn class_priors(corpus: &Corpus, split: Split) -> Result<CorpusStats> {
    let mut counts = [0u64; 9];
    for r in corpus.split(split) {
        let label = r
            .label
            .ok_or_else(|| CorpusError::Unlabeled(r.id.clone()))?;
        counts[label.index()] += 1;
    }
    Ok(CorpusStats::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "id,title,tags,user,timestamp,lat,lon,image_path,label,split\n\
        a1,marathon day,sports|city,bob,1370000000,48.2,16.3,img/a1.jpg,sports,development\n\
        a2,,,alice,,,,,non_event,test\n";

    #[test]
    fn parses_csv_rows() {
        let recs = read_metadata(CSV.as_bytes(), MetadataFormat::Csv).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].title.as_deref(), Some("marathon day"));
        assert_eq!(recs[0].tags, vec!["sports", "city"]);
        assert_eq!(recs[0].label, Some(ClassLabel::Sports));
        assert_eq!(
            recs[0].geo,
            Some(GeoPoint {
                lat: 48.2,
                lon: 16.3
            })
        );
        assert_eq!(recs[1].title, None);
        assert!(recs[1].tags.is_empty());
        assert_eq!(recs[1].geo, None);
        assert_eq!(recs[1].timestamp, None);
        assert_eq!(recs[1].image_path, None);
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let csv = "id,title,tags,user,timestamp,lat,lon,image_path,label,split\n\
            x1,a,,u,,,,,,\nx1,b,,u,,,,,,\n";
        match read_metadata(csv.as_bytes(), MetadataFormat::Csv) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "x1"),
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "id,title,tags,user,timestamp,lat,lon,image_path,label,split\n\
            ok,a,,u,,,,,,\nbad,b,,u,notanumber,,,,,\n";
        match read_metadata(csv.as_bytes(), MetadataFormat::Csv) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
        let jsonl = "{\"id\":\"a\"}\n{\"id\": 3\n";
        match read_metadata(jsonl.as_bytes(), MetadataFormat::JsonLines) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_missing_geo_is_absent() {
        let jsonl = "{\"id\":\"r\",\"title\":\"x\",\"tags\":[\"a\"],\"user\":\"u\",\"label\":\"concert\"}\n";
        let recs = read_metadata(jsonl.as_bytes(), MetadataFormat::JsonLines).unwrap();
        assert_eq!(recs[0].geo, None);
        assert_eq!(recs[0].label, Some(ClassLabel::Concert));
        let with_geo = "{\"id\":\"r\",\"lat\":1.5,\"lon\":2.5}\n";
        let recs = read_metadata(with_geo.as_bytes(), MetadataFormat::JsonLines).unwrap();
        assert_eq!(recs[0].geo, Some(GeoPoint { lat: 1.5, lon: 2.5 }));
    }

    fn three() -> Vec<MediaRecord> {
        ["a", "b", "c"]
            .iter()
            .map(|id| MediaRecord::new(*id))
            .collect()
    }

    #[test]
    fn split_assignment() {
        let table: HashMap<String, Split> = [
            ("a".to_string(), Split::Development),
            ("b".to_string(), Split::Development),
            ("c".to_string(), Split::Test),
        ]
        .into_iter()
        .collect();
        let corpus = assign_splits(three(), &table).unwrap();
        assert_eq!(corpus.split_len(Split::Development), 2);
        assert_eq!(corpus.split_len(Split::Test), 1);

        match assign_splits(three(), &HashMap::new()) {
            Err(CorpusError::Unassigned(ids)) => assert_eq!(ids, vec!["a", "b", "c"]),
            other => panic!("{other:?}"),
        }

        let mut ghost = table.clone();
        ghost.insert("ghost".into(), Split::Test);
        match assign_splits(three(), &ghost) {
            Err(CorpusError::UnknownIds(ids)) => assert_eq!(ids, vec!["ghost"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn priors_from_counts() {
        let mut counts = [0u64; 9];
        counts[ClassLabel::NonEvent.index()] = 50807;
        counts[ClassLabel::Concert.index()] = 6358;
        let stats = CorpusStats::from_counts(counts);
        assert!((stats.prior(ClassLabel::NonEvent) - 0.8888).abs() < 1e-4);

        let mut counts = [0u64; 9];
        counts[1] = 1;
        counts[2] = 1;
        counts[3] = 2;
        let stats = CorpusStats::from_counts(counts);
        assert_eq!(&stats.priors[1..4], &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn priors_single_class_and_unlabeled() {
        let mut recs = three();
        for r in &mut recs {
            r.split = Some(Split::Development);
            r.label = Some(ClassLabel::Fashion);
        }
        let corpus = Corpus::from_records(recs.clone()).unwrap();
        let stats = class_priors(&corpus, Split::Development).unwrap();
        assert_eq!(stats.prior(ClassLabel::Fashion), 1.0);

        recs[1].label = None;
        let corpus = Corpus::from_records(recs).unwrap();
        assert!(matches!(
            class_priors(&corpus, Split::Development),
            Err(CorpusError::Unlabeled(id)) if id == "b"
        ));
    }

    #[test]
    fn label_names_parse() {
        for c in ClassLabel::ALL {
            assert_eq!(c.as_str().parse::<ClassLabel>().unwrap(), c);
        }
        assert_eq!(
            "theater-dance".parse::<ClassLabel>().unwrap(),
            ClassLabel::TheaterDance
        );
        assert!("party".parse::<ClassLabel>().is_err());
    }
}
