//! Bioassay records: JSON ingestion, activity tables, and an immutable
//! in-memory store persisted as one JSONL file per assay plus a manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("document has no positive integer `aid`")]
    MissingAid,
    #[error("assay {0} has no description")]
    MissingDescription(u64),
    #[error("row {0} is malformed: {1}")]
    MalformedRow(usize, String),
    #[error("unknown outcome label `{0}`")]
    UnknownOutcome(String),
    #[error("assay {0} not found")]
    NotFound(u64),
    #[error("assay {0} ingested twice")]
    DuplicateAid(u64),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("activity table: {0}")]
    Table(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Active,
    Inactive,
    Unspecified,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Active => "Active",
            Outcome::Inactive => "Inactive",
            Outcome::Unspecified => "Unspecified",
        })
    }
}

/// Case-insensitive outcome mapping. Inconclusive results count as
/// unspecified and probe compounds as active.
pub fn map_outcome(label: &str) -> Result<Outcome, StoreError> {
    match label.trim().to_ascii_lowercase().as_str() {
        "active" | "probe" => Ok(Outcome::Active),
        "inactive" => Ok(Outcome::Inactive),
        "unspecified" | "inconclusive" => Ok(Outcome::Unspecified),
        _ => Err(StoreError::UnknownOutcome(label.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureKind {
    IC50,
    Ki,
    Kd,
    PercentInhibition,
    Other(String),
}

impl MeasureKind {
    pub fn parse(label: &str) -> Self {
        let key: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '%')
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "ic50" => MeasureKind::IC50,
            "ki" => MeasureKind::Ki,
            "kd" => MeasureKind::Kd,
            "inhibition" | "%inhibition" | "percentinhibition" | "inhibition%" => MeasureKind::PercentInhibition,
            _ => MeasureKind::Other(label.trim().to_string()),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            MeasureKind::IC50 => "IC50",
            MeasureKind::Ki => "Ki",
            MeasureKind::Kd => "Kd",
            MeasureKind::PercentInhibition => "Inhibition",
            MeasureKind::Other(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "=")]
    Equal,
    #[serde(rename = ">")]
    Greater,
}

impl Relation {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "<" => Some(Relation::Less),
            "=" | "" => Some(Relation::Equal),
            ">" => Some(Relation::Greater),
            _ => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Less => "<",
            Relation::Equal => "=",
            Relation::Greater => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub kind: MeasureKind,
    pub relation: Relation,
    pub value: f64,
    pub unit: String,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.kind.label(), self.relation.symbol(), self.value)?;
        if !self.unit.is_empty() {
            write!(f, " {}", self.unit)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRow {
    pub smiles: String,
    pub outcome: Outcome,
    pub measure: Option<Measure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TargetRef {
    pub uniprot_id: Option<String>,
    pub gene_symbol: Option<String>,
    pub organism: Option<String>,
}

impl TargetRef {
    fn is_empty(&self) -> bool {
        self.uniprot_id.is_none() && self.gene_symbol.is_none() && self.organism.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioAssayRecord {
    pub aid: u64,
    pub title: String,
    pub description: String,
    pub protocol: String,
    pub comment: String,
    pub targets: Vec<TargetRef>,
    pub rows: Vec<ActivityRow>,
}

impl BioAssayRecord {
    /// Serializes back into the ingestion document shape.
    pub fn to_document(&self) -> Value {
        let mut doc = self.header_document();
        doc["rows"] = Value::Array(self.rows.iter().map(row_document).collect());
        doc
    }

    fn header_document(&self) -> Value {
        let targets: Vec<Value> = self
            .targets
            .iter()
            .map(|t| {
                let mut m = Map::new();
                for (k, v) in [
                    ("uniprot_id", &t.uniprot_id),
                    ("gene_symbol", &t.gene_symbol),
                    ("organism", &t.organism),
                ] {
                    if let Some(v) = v {
                        m.insert(k.to_string(), Value::String(v.clone()));
                    }
                }
                Value::Object(m)
            })
            .collect();
        json!({
            "aid": self.aid,
            "title": self.title,
            "description": self.description,
            "protocol": self.protocol,
            "comment": self.comment,
            "targets": targets,
        })
    }

    pub fn uniprot_ids(&self) -> impl Iterator<Item = &str> {
        self.targets.iter().filter_map(|t| t.uniprot_id.as_deref())
    }
}

fn row_document(row: &ActivityRow) -> Value {
    let mut m = Map::new();
    m.insert("smiles".into(), Value::String(row.smiles.clone()));
    m.insert("outcome".into(), Value::String(row.outcome.to_string()));
    if let Some(ms) = &row.measure {
        m.insert("activity_kind".into(), Value::String(ms.kind.label().to_string()));
        m.insert("relation".into(), Value::String(ms.relation.symbol().to_string()));
        m.insert("value".into(), json!(ms.value));
        m.insert("unit".into(), Value::String(ms.unit.clone()));
    }
    Value::Object(m)
}

/// Text field that may be given as a string or as a list of lines.
fn text_field(doc: &Map<String, Value>, keys: &[&str]) -> String {
    for key in keys {
        match doc.get(*key) {
            Some(Value::String(s)) => return s.clone(),
            Some(Value::Array(items)) => {
                let lines: Vec<String> = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                return lines.join("\n");
            }
            _ => {}
        }
    }
    String::new()
}

fn optional_text(v: Option<&Value>) -> Option<String> {
    match v {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_value(v: Option<&Value>) -> Option<f64> {
    let x = match v? {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse::<f64>().ok()?,
        _ => return None,
    };
    x.is_finite().then_some(x)
}

/// Builds one row from loosely typed fields shared by JSON and CSV inputs.
fn build_row(
    index: usize,
    smiles: &str,
    outcome: &str,
    kind: Option<&str>,
    relation: Option<&str>,
    value: Option<f64>,
    unit: Option<&str>,
) -> Result<ActivityRow, StoreError> {
    let smiles = smiles.trim();
    if smiles.is_empty() {
        return Err(StoreError::MalformedRow(index, "empty smiles".into()));
    }
    if outcome.trim().is_empty() {
        return Err(StoreError::MalformedRow(index, "empty outcome".into()));
    }
    let outcome = map_outcome(outcome).map_err(|e| StoreError::MalformedRow(index, e.to_string()))?;
    let relation = match relation {
        Some(r) => Some(Relation::parse(r).ok_or_else(|| StoreError::MalformedRow(index, format!("relation `{r}`")))?),
        None => None,
    };
    let measure = match (kind.map(str::trim).filter(|k| !k.is_empty()), value) {
        (Some(kind), Some(value)) => Some(Measure {
            kind: MeasureKind::parse(kind),
            relation: relation.unwrap_or(Relation::Equal),
            value,
            unit: unit.unwrap_or("").trim().to_string(),
        }),
        _ => None,
    };
    Ok(ActivityRow {
        smiles: smiles.to_string(),
        outcome,
        measure,
    })
}

fn ingest_row(index: usize, v: &Value) -> Result<ActivityRow, StoreError> {
    let obj = v
        .as_object()
        .ok_or_else(|| StoreError::MalformedRow(index, "row is not an object".into()))?;
    let smiles = obj
        .get("smiles")
        .and_then(Value::as_str)
        .ok_or_else(|| StoreError::MalformedRow(index, "missing smiles".into()))?;
    let outcome = obj
        .get("outcome")
        .and_then(Value::as_str)
        .ok_or_else(|| StoreError::MalformedRow(index, "missing outcome".into()))?;
    let kind = obj
        .get("activity_kind")
        .or_else(|| obj.get("kind"))
        .and_then(Value::as_str);
    let relation = obj.get("relation").and_then(Value::as_str);
    let unit = obj.get("unit").and_then(Value::as_str);
    build_row(
        index,
        smiles,
        outcome,
        kind,
        relation,
        parse_value(obj.get("value")),
        unit,
    )
}

/// Validates a parsed assay document. Unknown fields are ignored.
pub fn ingest_assay(document: &Value) -> Result<BioAssayRecord, StoreError> {
    let doc = document
        .as_object()
        .ok_or_else(|| StoreError::InvalidDocument("top level is not an object".into()))?;
    let aid = doc
        .get("aid")
        .and_then(|v| v.as_u64().or_else(|| v.as_str().and_then(|s| s.trim().parse().ok())))
        .filter(|&a| a > 0)
        .ok_or(StoreError::MissingAid)?;
    let description = text_field(doc, &["description", "descr"]);
    if description.trim().is_empty() {
        return Err(StoreError::MissingDescription(aid));
    }
    let targets = match doc.get("targets") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|t| TargetRef {
                uniprot_id: optional_text(t.get("uniprot_id")),
                gene_symbol: optional_text(t.get("gene_symbol")),
                organism: optional_text(t.get("organism")),
            })
            .filter(|t| !t.is_empty())
            .collect(),
        _ => Vec::new(),
    };
    let rows = match doc.get("rows") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| ingest_row(i, v))
            .collect::<Result<Vec<_>, _>>()?,
        Some(Value::Null) | None => Vec::new(),
        Some(_) => return Err(StoreError::InvalidDocument("`rows` is not a list".into())),
    };
    Ok(BioAssayRecord {
        aid,
        title: text_field(doc, &["title", "name"]),
        description,
        protocol: text_field(doc, &["protocol"]),
        comment: text_field(doc, &["comment"]),
        targets,
        rows,
    })
}

pub fn ingest_assay_str(text: &str) -> Result<BioAssayRecord, StoreError> {
    let v: Value = serde_json::from_str(text).map_err(|e| StoreError::InvalidDocument(e.to_string()))?;
    ingest_assay(&v)
}

pub const TABLE_HEADER: [&str; 6] = ["SMILES", "OUTCOME", "KIND", "RELATION", "VALUE", "UNIT"];

/// Reads an activity table with header `SMILES,OUTCOME,KIND,RELATION,VALUE,UNIT`.
pub fn read_activity_table<R: io::Read>(reader: R) -> Result<Vec<ActivityRow>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header = rdr.headers().map_err(|e| StoreError::Table(e.to_string()))?.clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_uppercase()).collect();
    if names != TABLE_HEADER {
        return Err(StoreError::Table(format!("unexpected header {names:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| StoreError::MalformedRow(i, e.to_string()))?;
        let field = |k: usize| rec.get(k).map(str::trim).filter(|s| !s.is_empty());
        let value = field(4).and_then(|v| v.parse::<f64>().ok()).filter(|v| v.is_finite());
        rows.push(build_row(
            i,
            rec.get(0).unwrap_or(""),
            rec.get(1).unwrap_or(""),
            field(2),
            field(3),
            value,
            field(5),
        )?);
    }
    Ok(rows)
}

pub fn write_activity_table<W: io::Write>(rows: &[ActivityRow], writer: W) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(writer);
    let table_err = |e: csv::Error| StoreError::Table(e.to_string());
    w.write_record(TABLE_HEADER).map_err(table_err)?;
    for r in rows {
        let (kind, rel, value, unit) = match &r.measure {
            Some(m) => (
                m.kind.label().to_string(),
                m.relation.symbol(),
                m.value.to_string(),
                m.unit.clone(),
            ),
            None => (String::new(), "", String::new(), String::new()),
        };
        w.write_record([r.smiles.as_str(), &r.outcome.to_string(), &kind, rel, &value, &unit])
            .map_err(table_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Single-writer ingestion phase; `freeze` yields the shareable store.
#[derive(Debug, Default)]
pub struct StoreBuilder {
    records: BTreeMap<u64, BioAssayRecord>,
}

impl StoreBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: BioAssayRecord) -> Result<(), StoreError> {
        if self.records.contains_key(&record.aid) {
            return Err(StoreError::DuplicateAid(record.aid));
        }
        self.records.insert(record.aid, record);
        Ok(())
    }

    pub fn ingest_json(&mut self, text: &str) -> Result<u64, StoreError> {
        let rec = ingest_assay_str(text)?;
        let aid = rec.aid;
        self.insert(rec)?;
        Ok(aid)
    }

    /// Replaces the rows of an already ingested assay with a CSV table.
    pub fn attach_table<R: io::Read>(&mut self, aid: u64, reader: R) -> Result<usize, StoreError> {
        let rows = read_activity_table(reader)?;
        let rec = self.records.get_mut(&aid).ok_or(StoreError::NotFound(aid))?;
        rec.rows = rows;
        Ok(rec.rows.len())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn freeze(self) -> AssayStore {
        AssayStore { records: self.records }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format: String,
    pub assays: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub aid: u64,
    pub file: String,
    pub rows: usize,
}

const MANIFEST_FILE: &str = "manifest.json";
const STORE_FORMAT: &str = "assaymol-store/1";

/// Immutable record collection, ordered by aid.
#[derive(Debug, Clone, Default)]
pub struct AssayStore {
    records: BTreeMap<u64, BioAssayRecord>,
}

impl AssayStore {
    pub fn lookup(&self, aid: u64) -> Result<&BioAssayRecord, StoreError> {
        self.records.get(&aid).ok_or(StoreError::NotFound(aid))
    }

    pub fn get(&self, aid: u64) -> Option<&BioAssayRecord> {
        self.records.get(&aid)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &BioAssayRecord> {
        self.records.values()
    }

    /// Writes `<dir>/assays/<aid>.jsonl` (header line, then one line per row)
    /// and `<dir>/manifest.json`.
    pub fn persist(&self, dir: &Path) -> Result<StoreManifest, StoreError> {
        let assay_dir = dir.join("assays");
        fs::create_dir_all(&assay_dir)?;
        let mut entries = Vec::with_capacity(self.records.len());
        for rec in self.records.values() {
            let file = format!("assays/{}.jsonl", rec.aid);
            let mut w = BufWriter::new(fs::File::create(dir.join(&file))?);
            writeln!(w, "{}", rec.header_document())?;
            for row in &rec.rows {
                writeln!(w, "{}", row_document(row))?;
            }
            w.flush()?;
            entries.push(ManifestEntry {
                aid: rec.aid,
                file,
                rows: rec.rows.len(),
            });
        }
        let manifest = StoreManifest {
            format: STORE_FORMAT.to_string(),
            assays: entries,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| StoreError::InvalidDocument(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<AssayStore, StoreError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: StoreManifest =
            serde_json::from_str(&text).map_err(|e| StoreError::InvalidDocument(e.to_string()))?;
        let mut builder = StoreBuilder::new();
        for entry in &manifest.assays {
            let path: PathBuf = dir.join(&entry.file);
            let reader = io::BufReader::new(fs::File::open(&path)?);
            let mut lines = reader.lines();
            let header = lines
                .next()
                .ok_or_else(|| StoreError::InvalidDocument(format!("{} is empty", path.display())))??;
            let mut doc: Value =
                serde_json::from_str(&header).map_err(|e| StoreError::InvalidDocument(e.to_string()))?;
            let mut rows = Vec::with_capacity(entry.rows);
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                rows.push(
                    serde_json::from_str::<Value>(&line).map_err(|e| StoreError::InvalidDocument(e.to_string()))?,
                );
            }
            doc["rows"] = Value::Array(rows);
            builder.insert(ingest_assay(&doc)?)?;
        }
        Ok(builder.freeze())
    }

    pub fn manifest_path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }
}
