//! Scoring adapters, per-target metrics, cross-target aggregation and the
//! context-similarity analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::Command;

use assaymol_chem::{
    canonicalize, diversity_of_fingerprints, morgan_fingerprint, parse_smiles, tanimoto, Fingerprint, DEFAULT_NBITS,
    DEFAULT_RADIUS,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::RelevanceGroup;
use crate::store::{ActivityRow, Outcome};

/// Histogram bin width for the context-similarity analysis.
pub const SIMILARITY_BIN_WIDTH: f64 = 0.05;
pub const SIMILARITY_BINS: usize = 20;
const STDERR_EXCERPT: usize = 400;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no scores to evaluate")]
    Empty,
    #[error("baseline is empty")]
    EmptyBaseline,
    #[error("no context molecule scores better than the reference")]
    NoHighScoringContext,
    #[error("external tool not found: {0}")]
    ToolNotFound(String),
    #[error("external tool failed ({status}): {stderr}")]
    ToolCrash { status: String, stderr: String },
    #[error("unparseable tool output at line {line}: `{text}`")]
    UnparseableOutput { line: usize, text: String },
    #[error("score file line {line}: {message}")]
    ScoreFile { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    VinaDock,
    Qed,
    Sa,
    Herg,
}

impl ScoreKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vina_dock" => Some(ScoreKind::VinaDock),
            "qed" => Some(ScoreKind::Qed),
            "sa" => Some(ScoreKind::Sa),
            "herg" => Some(ScoreKind::Herg),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScoreKind::VinaDock => "vina_dock",
            ScoreKind::Qed => "qed",
            ScoreKind::Sa => "sa",
            ScoreKind::Herg => "herg",
        }
    }

    /// Docking energies are unbounded; the other scores are normalized to [0, 1].
    pub fn in_range(self, v: f64) -> bool {
        v.is_finite() && (self == ScoreKind::VinaDock || (0.0..=1.0).contains(&v))
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    ExternalTool,
    ImportedFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub canonical_smiles: String,
    pub score_kind: ScoreKind,
    pub value: f64,
    pub source: ScoreSource,
}

pub const SCORE_HEADER: [&str; 3] = ["SMILES", "KIND", "VALUE"];

/// Reads a `SMILES,KIND,VALUE` score file. SMILES are stored canonicalized.
pub fn read_score_file<R: io::Read>(reader: R) -> Result<Vec<ScoreRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| EvalError::ScoreFile {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != SCORE_HEADER {
        return Err(EvalError::ScoreFile {
            line: 1,
            message: format!("expected header {}", SCORE_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| EvalError::ScoreFile { line, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let canonical = canonicalize(&rec[0]).map_err(|e| bad(format!("SMILES `{}`: {e}", &rec[0])))?;
        let kind = ScoreKind::parse(&rec[1]).ok_or_else(|| bad(format!("unknown kind `{}`", &rec[1])))?;
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| bad(format!("value `{}` is not a number", &rec[2])))?;
        if !kind.in_range(value) {
            return Err(bad(format!("{kind} value {value} out of range")));
        }
        out.push(ScoreRecord {
            canonical_smiles: canonical,
            score_kind: kind,
            value,
            source: ScoreSource::ImportedFile,
        });
    }
    Ok(out)
}

pub fn write_score_file<W: io::Write>(records: &[ScoreRecord], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| EvalError::Io(io::Error::other(e));
    w.write_record(SCORE_HEADER).map_err(io_err)?;
    for r in records {
        w.write_record([r.canonical_smiles.as_str(), r.score_kind.label(), &r.value.to_string()])
            .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Score lookup by canonical SMILES and kind. Later records replace earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    values: BTreeMap<(String, ScoreKind), f64>,
}

impl ScoreTable {
    pub fn from_records(records: &[ScoreRecord]) -> Self {
        let mut t = ScoreTable::default();
        t.extend(records);
        t
    }

    pub fn extend(&mut self, records: &[ScoreRecord]) {
        for r in records {
            self.values.insert((r.canonical_smiles.clone(), r.score_kind), r.value);
        }
    }

    pub fn get(&self, canonical: &str, kind: ScoreKind) -> Option<f64> {
        self.values.get(&(canonical.to_string(), kind)).copied()
    }

    /// Looks up a SMILES in any spelling.
    pub fn get_smiles(&self, smiles: &str, kind: ScoreKind) -> Option<f64> {
        canonicalize(smiles).ok().and_then(|c| self.get(&c, kind))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// External scorer invoked as `<program> [<receptor>] <ligand_file>`.
///
/// The ligand file holds one SMILES per line. The tool prints one line per
/// scored molecule matching `^\S+\s+<float>$`; blank lines are ignored and
/// molecules it does not mention count as unscored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    pub program: PathBuf,
    pub receptor: Option<PathBuf>,
    /// Concurrent invocations; defaults to the CPU count.
    pub workers: Option<usize>,
}

impl ToolConfig {
    pub fn new(program: impl Into<PathBuf>, receptor: Option<PathBuf>) -> Self {
        ToolConfig {
            program: program.into(),
            receptor,
            workers: None,
        }
    }

    fn worker_count(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolOutcome {
    pub records: Vec<ScoreRecord>,
    /// Inputs the tool returned no score for.
    pub missing: Vec<String>,
}

fn parse_tool_line(line: &str, number: usize) -> Result<Option<(String, f64)>, EvalError> {
    let t = line.trim();
    if t.is_empty() {
        return Ok(None);
    }
    let bad = || EvalError::UnparseableOutput {
        line: number,
        text: t.to_string(),
    };
    let mut parts = t.split_whitespace();
    let (Some(smiles), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(bad());
    };
    let value: f64 = value.parse().map_err(|_| bad())?;
    if !value.is_finite() {
        return Err(bad());
    }
    Ok(Some((smiles.to_string(), value)))
}

fn invoke(tool: &ToolConfig, chunk: &[String]) -> Result<Vec<(String, f64)>, EvalError> {
    let mut ligands = tempfile::NamedTempFile::new()?;
    for s in chunk {
        writeln!(ligands, "{s}")?;
    }
    ligands.flush()?;
    let mut cmd = Command::new(&tool.program);
    if let Some(r) = &tool.receptor {
        cmd.arg(r);
    }
    cmd.arg(ligands.path());
    let output = cmd.output().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
            EvalError::ToolNotFound(tool.program.display().to_string())
        }
        _ => EvalError::Io(e),
    })?;
    if !output.status.success() {
        let stderr: String = String::from_utf8_lossy(&output.stderr)
            .chars()
            .take(STDERR_EXCERPT)
            .collect();
        return Err(EvalError::ToolCrash {
            status: output.status.to_string(),
            stderr,
        });
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let mut out = Vec::new();
    for (i, line) in stdout.lines().enumerate() {
        if let Some(pair) = parse_tool_line(line, i + 1)? {
            out.push(pair);
        }
    }
    Ok(out)
}

/// Scores molecules with an external tool, splitting them across a bounded
/// pool of concurrent invocations.
pub fn run_external_tool(molecules: &[String], tool: &ToolConfig, kind: ScoreKind) -> Result<ToolOutcome, EvalError> {
    if molecules.is_empty() {
        return Ok(ToolOutcome {
            records: Vec::new(),
            missing: Vec::new(),
        });
    }
    let workers = tool.worker_count().min(molecules.len());
    let chunk_len = molecules.len().div_ceil(workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EvalError::Io(io::Error::other(e)))?;
    let chunks: Vec<&[String]> = molecules.chunks(chunk_len).collect();
    let results: Vec<Result<Vec<(String, f64)>, EvalError>> =
        pool.install(|| chunks.par_iter().map(|c| invoke(tool, c)).collect());

    let mut scored: BTreeMap<String, f64> = BTreeMap::new();
    for r in results {
        for (smiles, value) in r? {
            let key = canonicalize(&smiles).unwrap_or(smiles);
            scored.entry(key).or_insert(value);
        }
    }
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for m in molecules {
        let canonical = canonicalize(m).unwrap_or_else(|_| m.clone());
        match scored.get(&canonical).filter(|v| kind.in_range(**v)) {
            Some(&value) => records.push(ScoreRecord {
                canonical_smiles: canonical,
                score_kind: kind,
                value,
                source: ScoreSource::ExternalTool,
            }),
            None => missing.push(m.clone()),
        }
    }
    Ok(ToolOutcome { records, missing })
}

pub fn dock_adapter(
    molecules: &[String],
    receptor: &Path,
    program: &Path,
    workers: Option<usize>,
) -> Result<ToolOutcome, EvalError> {
    let tool = ToolConfig {
        program: program.to_path_buf(),
        receptor: Some(receptor.to_path_buf()),
        workers,
    };
    run_external_tool(molecules, &tool, ScoreKind::VinaDock)
}

/// Fraction of scores strictly below the reference (lower is better).
pub fn high_affinity_fraction(scores: &[f64], reference_score: f64) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let better = scores.iter().filter(|&&s| s < reference_score).count();
    Ok(better as f64 / scores.len() as f64)
}

/// `mean(baseline) - score`: positive when the score beats the baseline average.
pub fn improvement_over_baseline(score: f64, baseline_scores: &[f64]) -> Result<f64, EvalError> {
    let m = mean(baseline_scores).ok_or(EvalError::EmptyBaseline)?;
    Ok(m - score)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Median; for an even count, the midpoint of the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetInput<'a> {
    pub target_id: &'a str,
    /// Unique valid molecules, canonical SMILES.
    pub molecules: &'a [String],
    pub validity: f64,
    pub reference_score: Option<f64>,
    pub baseline_scores: Option<&'a [f64]>,
    pub relevance_group: Option<RelevanceGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target_id: String,
    pub n_molecules: usize,
    pub n_docked: usize,
    pub vina_avg: Option<f64>,
    pub vina_med: Option<f64>,
    pub high_affinity: Option<f64>,
    pub diversity: Option<f64>,
    pub size_avg: Option<f64>,
    pub size_med: Option<f64>,
    pub qed_avg: Option<f64>,
    pub sa_avg: Option<f64>,
    pub validity: f64,
    pub improvement_avg: Option<f64>,
    pub improvement_med: Option<f64>,
    pub relevance_group: Option<RelevanceGroup>,
}

/// How improvement is averaged; written into report metadata.
pub const IMPROVEMENT_AVERAGING: &str = "per-molecule improvement, then mean and median per target";

/// Computes one target's metrics. Molecules without a score are left out of
/// score averages; `n_docked` records how many remained.
pub fn evaluate_target(input: &TargetInput<'_>, scores: &ScoreTable) -> Result<EvalReport, EvalError> {
    let parsed: Vec<_> = input.molecules.iter().filter_map(|s| parse_smiles(s).ok()).collect();
    let sizes: Vec<f64> = parsed.iter().map(|m| m.heavy_atom_count() as f64).collect();
    let fps: Vec<Fingerprint> = parsed
        .iter()
        .map(|m| morgan_fingerprint(m, DEFAULT_RADIUS, DEFAULT_NBITS))
        .collect();
    let collect = |kind| -> Vec<f64> { input.molecules.iter().filter_map(|m| scores.get(m, kind)).collect() };
    let vina = collect(ScoreKind::VinaDock);
    let high_affinity = match input.reference_score {
        Some(r) if !vina.is_empty() => Some(high_affinity_fraction(&vina, r)?),
        _ => None,
    };
    let improvements: Option<Vec<f64>> = match input.baseline_scores {
        Some(b) if !vina.is_empty() => Some(
            vina.iter()
                .map(|&s| improvement_over_baseline(s, b))
                .collect::<Result<_, _>>()?,
        ),
        _ => None,
    };
    Ok(EvalReport {
        target_id: input.target_id.to_string(),
        n_molecules: input.molecules.len(),
        n_docked: vina.len(),
        vina_avg: mean(&vina),
        vina_med: median(&vina),
        high_affinity,
        diversity: diversity_of_fingerprints(&fps).ok(),
        size_avg: mean(&sizes),
        size_med: median(&sizes),
        qed_avg: mean(&collect(ScoreKind::Qed)),
        sa_avg: mean(&collect(ScoreKind::Sa)),
        validity: input.validity,
        improvement_avg: improvements.as_deref().and_then(mean),
        improvement_med: improvements.as_deref().and_then(median),
        relevance_group: input.relevance_group,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub avg: f64,
    pub med: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_targets: usize,
    pub metrics: BTreeMap<String, Summary>,
    pub improvement_averaging: String,
}

type Field = (&'static str, fn(&EvalReport) -> Option<f64>);

const FIELDS: [Field; 12] = [
    ("vina_avg", |r| r.vina_avg),
    ("vina_med", |r| r.vina_med),
    ("high_affinity", |r| r.high_affinity),
    ("diversity", |r| r.diversity),
    ("size_avg", |r| r.size_avg),
    ("size_med", |r| r.size_med),
    ("qed_avg", |r| r.qed_avg),
    ("sa_avg", |r| r.sa_avg),
    ("validity", |r| Some(r.validity)),
    ("improvement_avg", |r| r.improvement_avg),
    ("improvement_med", |r| r.improvement_med),
    ("n_docked", |r| Some(r.n_docked as f64)),
];

/// Mean and median across targets of each per-target metric. Targets lacking
/// a metric are skipped for that metric only.
pub fn aggregate_targets(reports: &[EvalReport]) -> Result<Aggregate, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut metrics = BTreeMap::new();
    for (name, get) in FIELDS {
        let values: Vec<f64> = reports.iter().filter_map(get).collect();
        if let (Some(avg), Some(med)) = (mean(&values), median(&values)) {
            metrics.insert(
                name.to_string(),
                Summary {
                    avg,
                    med,
                    n: values.len(),
                },
            );
        }
    }
    Ok(Aggregate {
        n_targets: reports.len(),
        metrics,
        improvement_averaging: IMPROVEMENT_AVERAGING.to_string(),
    })
}

/// Aggregates separately for each relevance group; ungrouped reports are skipped.
pub fn aggregate_by_group(reports: &[EvalReport]) -> BTreeMap<RelevanceGroup, Aggregate> {
    let mut groups: BTreeMap<RelevanceGroup, Vec<EvalReport>> = BTreeMap::new();
    for r in reports {
        if let Some(g) = r.relevance_group {
            groups.entry(g).or_default().push(r.clone());
        }
    }
    groups
        .into_iter()
        .map(|(g, rs)| (g, aggregate_targets(&rs).expect("group is non-empty")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub context: String,
    pub generated: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSimilarity {
    pub high_scoring_context: Vec<String>,
    pub pairs: Vec<SimilarityPair>,
    /// Counts per bin of width 0.05 over [0, 1]; 1.0 falls in the last bin.
    pub histogram: Vec<u64>,
}

pub fn similarity_bin(similarity: f64) -> usize {
    let b = (similarity * SIMILARITY_BINS as f64 + 1e-9).floor();
    (b.max(0.0) as usize).min(SIMILARITY_BINS - 1)
}

/// Tanimoto similarity between every generated molecule and every context
/// molecule docking better than the reference.
pub fn context_similarity_analysis(
    generated: &[String],
    context_rows: &[ActivityRow],
    context_scores: &ScoreTable,
    reference_score: f64,
) -> Result<ContextSimilarity, EvalError> {
    let fingerprint = |s: &str| {
        parse_smiles(s)
            .ok()
            .map(|m| morgan_fingerprint(&m, DEFAULT_RADIUS, DEFAULT_NBITS))
    };
    let mut seen = BTreeSet::new();
    let context: Vec<(String, Fingerprint)> = context_rows
        .iter()
        .filter_map(|r| {
            let c = canonicalize(&r.smiles).ok()?;
            let score = context_scores.get(&c, ScoreKind::VinaDock)?;
            (score < reference_score && seen.insert(c.clone()))
                .then(|| fingerprint(&c).map(|fp| (c, fp)))
                .flatten()
        })
        .collect();
    if context.is_empty() {
        return Err(EvalError::NoHighScoringContext);
    }
    let gen: Vec<(&String, Fingerprint)> = generated
        .iter()
        .filter_map(|g| fingerprint(g).map(|fp| (g, fp)))
        .collect();
    let mut pairs = Vec::with_capacity(context.len() * gen.len());
    let mut histogram = vec![0u64; SIMILARITY_BINS];
    for (c, cfp) in &context {
        for (g, gfp) in &gen {
            let similarity = tanimoto(cfp, gfp).expect("same fingerprint size");
            histogram[similarity_bin(similarity)] += 1;
            pairs.push(SimilarityPair {
                context: c.clone(),
                generated: (*g).clone(),
                similarity,
            });
        }
    }
    Ok(ContextSimilarity {
        high_scoring_context: context.into_iter().map(|(c, _)| c).collect(),
        pairs,
        histogram,
    })
}

/// Active rows of an assay, a convenient context set for the analysis.
pub fn active_rows(rows: &[ActivityRow]) -> Vec<ActivityRow> {
    rows.iter().filter(|r| r.outcome == Outcome::Active).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HergDelta {
    pub original: String,
    pub optimized: String,
    pub before: f64,
    pub after: f64,
    /// `after - before`; negative means lower predicted hERG activity.
    pub delta: f64,
}

/// Per-molecule change in predicted hERG score; pairs lacking either score are skipped.
pub fn herg_deltas<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>, scores: &ScoreTable) -> Vec<HergDelta> {
    pairs
        .into_iter()
        .filter_map(|(original, optimized)| {
            let before = scores.get_smiles(original, ScoreKind::Herg)?;
            let after = scores.get_smiles(optimized, ScoreKind::Herg)?;
            Some(HergDelta {
                original: original.to_string(),
                optimized: optimized.to_string(),
                before,
                after,
                delta: after - before,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per target.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "target_id",
        "n_molecules",
        "n_docked",
        "vina_avg",
        "vina_med",
        "high_affinity",
        "diversity",
        "size_avg",
        "size_med",
        "qed_avg",
        "sa_avg",
        "validity",
        "improvement_avg",
        "improvement_med",
        "relevance_group",
    ])
    .expect("in-memory write");
    for r in reports {
        w.write_record([
            r.target_id.clone(),
            r.n_molecules.to_string(),
            r.n_docked.to_string(),
            opt(r.vina_avg),
            opt(r.vina_med),
            opt(r.high_affinity),
            opt(r.diversity),
            opt(r.size_avg),
            opt(r.size_med),
            opt(r.qed_avg),
            opt(r.sa_avg),
            r.validity.to_string(),
            opt(r.improvement_avg),
            opt(r.improvement_med),
            r.relevance_group.map_or_else(String::new, |g| format!("{g:?}")),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// One row per metric with its cross-target mean, median and count.
pub fn aggregate_to_csv(agg: &Aggregate) -> String {
    let mut out = String::from("metric,avg,med,n\n");
    for (name, s) in &agg.metrics {
        out.push_str(&format!("{name},{},{},{}\n", s.avg, s.med, s.n));
    }
    out
}
