//! Batched generation, `[BOS]`/`[EOS]` parsing, validity, and counter-target optimization.

use std::collections::BTreeSet;

use assaymol_chem::canonicalize;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::context::{build_optimization_prompt, AssayContextBlock, ContextError, GenerationPrompt};
use crate::llm::{sha256_hex, ChatRequest, Gateway, LlmError};
use crate::retrieval::Hyperparameters;
use crate::templates::Template;

pub const BOS: &str = "[BOS]";
pub const EOS: &str = "[EOS]";
/// Molecules requested per call by the generation and optimization templates.
pub const MOLECULES_PER_CALL: usize = 10;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("optimization needs exactly {expected} molecules, got {got}")]
    BatchSizeMismatch { expected: usize, got: usize },
    #[error("input molecule `{0}` does not parse")]
    InvalidInput(String),
    #[error("run aborted after {} batches: {source}", partial.batches.len())]
    Aborted {
        partial: Box<GenerationRun>,
        source: LlmError,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedEntry {
    pub ordinal: u32,
    pub smiles: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub ordinal: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedGeneration {
    pub entries: Vec<ParsedEntry>,
    pub failures: Vec<ParseFailure>,
}

/// Reads a list number such as `7`, `7.`, `7)` or `**7.**` at the start of `s`.
fn leading_number(s: &str) -> Option<(u32, &str)> {
    let t = s.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '-' | '#' | '`' | '('));
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 || digits > 2 {
        return None;
    }
    let n: u32 = t[..digits].parse().ok()?;
    let rest = t[digits..].trim_start_matches(['.', ')', ':', '*']);
    (1..=10).contains(&n).then_some((n, rest))
}

/// Ordinal written on the marker's own line, or on the closest non-blank
/// preceding line if that line holds only a number.
fn written_ordinal(raw: &str, marker: usize) -> Option<u32> {
    let line_start = raw[..marker].rfind('\n').map_or(0, |i| i + 1);
    let prefix = &raw[line_start..marker];
    if let Some((n, rest)) = leading_number(prefix) {
        if rest
            .trim_matches(|c: char| c.is_whitespace() || c == '`' || c == '*')
            .is_empty()
        {
            return Some(n);
        }
    }
    if !prefix.trim_matches(|c: char| c.is_whitespace() || c == '`').is_empty() {
        return None;
    }
    let before = raw[..line_start].trim_end();
    let prev = before.rsplit('\n').next()?;
    match leading_number(prev) {
        Some((n, rest)) if rest.trim().is_empty() => Some(n),
        _ => None,
    }
}

/// Extracts every `[BOS] ... [EOS]` span in order. Never fails; malformed
/// spans are reported in `failures`.
pub fn parse_generation(raw: &str) -> ParsedGeneration {
    let mut out = ParsedGeneration::default();
    let mut last_ordinal = 0u32;
    let mut cursor = 0;
    // A span cut short by a nested marker passes its ordinal to the inner span.
    let mut carried: Option<u32> = None;
    while let Some(off) = raw[cursor..].find(BOS) {
        let start = cursor + off;
        let body_start = start + BOS.len();
        let ordinal = carried
            .take()
            .or_else(|| written_ordinal(raw, start))
            .unwrap_or(last_ordinal + 1);
        last_ordinal = ordinal;
        let next_eos = raw[body_start..].find(EOS).map(|i| body_start + i);
        let next_bos = raw[body_start..].find(BOS).map(|i| body_start + i);
        match (next_eos, next_bos) {
            (Some(e), b) if b.is_none_or(|b| e < b) => {
                let smiles = raw[body_start..e].trim();
                if smiles.is_empty() {
                    out.failures.push(ParseFailure {
                        ordinal,
                        reason: "empty span".into(),
                    });
                } else {
                    out.entries.push(ParsedEntry {
                        ordinal,
                        smiles: smiles.to_string(),
                    });
                }
                cursor = e + EOS.len();
            }
            (_, Some(b)) => {
                out.failures.push(ParseFailure {
                    ordinal,
                    reason: format!("nested {BOS} before {EOS}"),
                });
                carried = Some(ordinal);
                cursor = b;
            }
            _ => {
                out.failures.push(ParseFailure {
                    ordinal,
                    reason: format!("missing {EOS}"),
                });
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidMolecule {
    pub ordinal: u32,
    pub smiles: String,
    pub canonical: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationBatch {
    pub batch_index: usize,
    pub raw_text: String,
    pub parsed: Vec<ParsedEntry>,
    pub valid_molecules: Vec<ValidMolecule>,
    pub parse_failures: Vec<ParseFailure>,
}

impl GenerationBatch {
    /// Parses a reply; spans past the tenth are recorded as failures.
    pub fn from_reply(batch_index: usize, raw_text: String) -> Self {
        let ParsedGeneration {
            mut entries,
            mut failures,
        } = parse_generation(&raw_text);
        if entries.len() > MOLECULES_PER_CALL {
            for extra in entries.split_off(MOLECULES_PER_CALL) {
                failures.push(ParseFailure {
                    ordinal: extra.ordinal,
                    reason: format!("more than {MOLECULES_PER_CALL} molecules in one reply"),
                });
            }
        }
        let valid_molecules = entries
            .iter()
            .filter_map(|e| {
                canonicalize(&e.smiles).ok().map(|canonical| ValidMolecule {
                    ordinal: e.ordinal,
                    smiles: e.smiles.clone(),
                    canonical,
                })
            })
            .collect();
        GenerationBatch {
            batch_index,
            raw_text,
            parsed: entries,
            valid_molecules,
            parse_failures: failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub target_id: String,
    pub seed: u64,
    pub model_id: String,
    pub prompt_sha256: String,
    pub batches: Vec<GenerationBatch>,
    pub unique_generated: usize,
    pub unique_parsable: usize,
    pub unique_canonical: BTreeSet<String>,
    pub validity: f64,
}

impl GenerationRun {
    pub fn new(target_id: &str, seed: u64, model_id: &str, prompt_sha256: String) -> Self {
        GenerationRun {
            target_id: target_id.to_string(),
            seed,
            model_id: model_id.to_string(),
            prompt_sha256,
            batches: Vec::new(),
            unique_generated: 0,
            unique_parsable: 0,
            unique_canonical: BTreeSet::new(),
            validity: 0.0,
        }
    }

    /// Appends a batch and recomputes the run-level metrics.
    pub fn push(&mut self, batch: GenerationBatch) {
        self.batches.push(batch);
        let m = validity_metrics(
            self.batches
                .iter()
                .flat_map(|b| b.parsed.iter().map(|e| e.smiles.as_str())),
        );
        self.unique_generated = m.unique_generated;
        self.unique_parsable = m.unique_parsable;
        self.unique_canonical = m.unique_canonical;
        self.validity = m.validity;
    }

    /// Unique valid molecules in first-seen order, as canonical SMILES.
    pub fn molecules(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.batches
            .iter()
            .flat_map(|b| &b.valid_molecules)
            .filter(|m| seen.insert(m.canonical.clone()))
            .map(|m| m.canonical.clone())
            .collect()
    }

    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("run serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMetrics {
    pub unique_generated: usize,
    pub unique_parsable: usize,
    pub unique_canonical: BTreeSet<String>,
    pub validity: f64,
}

/// Uniqueness for validity is over the generated strings as written;
/// `unique_canonical` collapses different spellings of one molecule.
pub fn validity_metrics<'a>(generated: impl IntoIterator<Item = &'a str>) -> ValidityMetrics {
    let unique: BTreeSet<&str> = generated.into_iter().collect();
    let mut unique_parsable = 0;
    let mut unique_canonical = BTreeSet::new();
    for s in &unique {
        if let Ok(c) = canonicalize(s) {
            unique_parsable += 1;
            unique_canonical.insert(c);
        }
    }
    let validity = if unique.is_empty() {
        0.0
    } else {
        unique_parsable as f64 / unique.len() as f64
    };
    ValidityMetrics {
        unique_generated: unique.len(),
        unique_parsable,
        unique_canonical,
        validity,
    }
}

/// Seed for one batch, derived from the run seed.
pub fn batch_seed(seed: u64, batch_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((batch_index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub target_id: String,
    pub provider_id: String,
    pub seed: u64,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl RunSettings {
    pub fn new(target_id: &str, provider_id: &str, seed: u64) -> Self {
        RunSettings {
            target_id: target_id.to_string(),
            provider_id: provider_id.to_string(),
            seed,
            temperature: crate::llm::DEFAULT_TEMPERATURE,
            max_output_tokens: crate::llm::DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

/// Issues `ceil(total_molecules / batch_size)` calls with the same prompt.
/// A provider failure aborts the run; the batches completed so far are
/// returned inside the error.
pub fn run_generation(
    prompt: &GenerationPrompt,
    hp: &Hyperparameters,
    gateway: &Gateway,
    settings: &RunSettings,
) -> Result<GenerationRun, GenerationError> {
    let calls = hp.total_molecules.div_ceil(hp.batch_size.max(1));
    let mut run = GenerationRun::new(
        &settings.target_id,
        settings.seed,
        &settings.provider_id,
        sha256_hex(&prompt.rendered_text),
    );
    for i in 0..calls {
        let mut req = ChatRequest::new(prompt.rendered_text.clone(), settings.provider_id.clone())
            .with_seed(batch_seed(settings.seed, i));
        req.temperature = settings.temperature;
        req.max_output_tokens = settings.max_output_tokens;
        match gateway.chat(&settings.provider_id, &req) {
            Ok(text) => run.push(GenerationBatch::from_reply(i, text)),
            Err(source) => {
                return Err(GenerationError::Aborted {
                    partial: Box::new(run),
                    source,
                })
            }
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizedPair {
    pub ordinal: u32,
    pub original: String,
    pub optimized: String,
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CounterContext<'a> {
    pub description: &'a str,
    pub blocks: &'a [AssayContextBlock],
    pub template: &'a Template,
}

/// One optimization call on exactly ten molecules. Outputs are matched to
/// inputs by ordinal; a missing or unparsable output keeps the original.
pub fn optimize_against_countertarget(
    molecules: &[String],
    counter: &CounterContext<'_>,
    gateway: &Gateway,
    provider_id: &str,
    seed: u64,
) -> Result<Vec<OptimizedPair>, GenerationError> {
    if molecules.len() != MOLECULES_PER_CALL {
        return Err(GenerationError::BatchSizeMismatch {
            expected: MOLECULES_PER_CALL,
            got: molecules.len(),
        });
    }
    if let Some(bad) = molecules.iter().find(|m| canonicalize(m).is_err()) {
        return Err(GenerationError::InvalidInput(bad.clone()));
    }
    let prompt = build_optimization_prompt(counter.description, counter.blocks, molecules, counter.template)?;
    let reply = gateway.chat(
        provider_id,
        &ChatRequest::new(prompt.rendered_text, provider_id).with_seed(seed),
    )?;
    let parsed = parse_generation(&reply);
    Ok(molecules
        .iter()
        .enumerate()
        .map(|(i, original)| {
            let ordinal = i as u32 + 1;
            let candidate = parsed.entries.iter().find(|e| e.ordinal == ordinal);
            let (optimized, reason) = match candidate {
                None => (original.clone(), Some("no output for this ordinal".to_string())),
                Some(e) => match canonicalize(&e.smiles) {
                    Ok(_) => (e.smiles.clone(), None),
                    Err(err) => (original.clone(), Some(format!("unparsable output: {err}"))),
                },
            };
            OptimizedPair {
                ordinal,
                original: original.clone(),
                fallback: reason.is_some(),
                optimized,
                fallback_reason: reason,
            }
        })
        .collect())
}

/// Optimizes any number of molecules in calls of ten. The last call is
/// padded by cycling from the start of the list and padded outputs are discarded.
pub fn optimize_all(
    molecules: &[String],
    counter: &CounterContext<'_>,
    gateway: &Gateway,
    provider_id: &str,
    seed: u64,
) -> Result<Vec<OptimizedPair>, GenerationError> {
    let mut out = Vec::with_capacity(molecules.len());
    for (call, chunk) in molecules.chunks(MOLECULES_PER_CALL).enumerate() {
        let real = chunk.len();
        let batch: Vec<String> = chunk
            .iter()
            .chain(molecules.iter().cycle())
            .take(MOLECULES_PER_CALL)
            .cloned()
            .collect();
        let pairs = optimize_against_countertarget(&batch, counter, gateway, provider_id, batch_seed(seed, call))?;
        out.extend(pairs.into_iter().take(real).map(|mut p| {
            p.ordinal = out_ordinal(call, p.ordinal);
            p
        }));
    }
    Ok(out)
}

fn out_ordinal(call: usize, ordinal: u32) -> u32 {
    (call * MOLECULES_PER_CALL) as u32 + ordinal
}
