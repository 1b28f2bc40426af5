//! Per-assay summaries, exemplar sampling, activity tables and prompt assembly.

use assaymol_chem::parse_smiles;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{canonical_payload, IndexError};
use crate::llm::{extract_structured, ChatRequest, ExtractError, Gateway, LlmError};
use crate::retrieval::Hyperparameters;
use crate::store::{ActivityRow, BioAssayRecord, Outcome};
use crate::templates::{Template, TemplateError, TemplateId};

/// Characters per token used when converting a token budget.
pub const CHARS_PER_TOKEN: usize = 4;
pub const DEFAULT_BUDGET_CHARS: usize = 100_000;

const SUMMARY_KEYS: [&str; 4] = [
    "BioAssay_Summary",
    "Assay_Type",
    "Summary_of_Observations",
    "CounterScreen",
];

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("no rows to sample from")]
    EmptyRows,
    #[error("no usable assay blocks")]
    NoUsableBlocks,
    #[error("summary reply: {0}")]
    Extract(#[from] ExtractError),
    #[error("summary reply has an empty BioAssay_Summary")]
    EmptySummary,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Payload(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssaySummary {
    pub aid: u64,
    pub summary: String,
    pub assay_type: String,
    pub observations: String,
    pub counterscreen: bool,
}

/// Fills the summarization template and parses the four required keys.
pub fn summarize_assay(
    record: &BioAssayRecord,
    query_description: &str,
    gateway: &Gateway,
    provider_id: &str,
    template: &Template,
) -> Result<AssaySummary, ContextError> {
    let payload = canonical_payload(record)?;
    let prompt = template.render(&[
        ("{Protein Description}", query_description),
        ("{BioAssay JSON}", &payload),
    ])?;
    let reply = gateway.chat(provider_id, &ChatRequest::new(prompt, provider_id))?;
    let fields = extract_structured(&reply, &SUMMARY_KEYS)?;
    let summary = fields["BioAssay_Summary"].trim().to_string();
    if summary.is_empty() {
        return Err(ContextError::EmptySummary);
    }
    Ok(AssaySummary {
        aid: record.aid,
        summary,
        assay_type: fields["Assay_Type"].trim().to_string(),
        observations: fields["Summary_of_Observations"].trim().to_string(),
        counterscreen: fields["CounterScreen"] == "True",
    })
}

/// Keeps rows whose SMILES parse and whose heavy-atom count is within `max_mol_size`.
pub fn prefilter_rows(rows: &[ActivityRow], max_mol_size: usize) -> Vec<ActivityRow> {
    rows.iter()
        .filter(|r| parse_smiles(&r.smiles).is_ok_and(|m| m.heavy_atom_count() <= max_mol_size))
        .cloned()
        .collect()
}

/// An assay without actives needs at least `2 * n_mol` rows to be used.
pub fn passes_gate(rows: &[ActivityRow], hp: &Hyperparameters) -> bool {
    rows.iter().any(|r| r.outcome == Outcome::Active) || rows.len() >= 2 * hp.n_mol
}

fn take_random<'a>(pool: &[&'a ActivityRow], amount: usize, rng: &mut ChaCha8Rng) -> Vec<&'a ActivityRow> {
    if amount >= pool.len() {
        return pool.to_vec();
    }
    let mut picked = sample(rng, pool.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i]).collect()
}

/// Class-balanced exemplar sample, actives first. Without actives, up to
/// `2 * n_mol` rows are drawn from the whole table.
pub fn sample_molecules(
    rows: &[ActivityRow],
    hp: &Hyperparameters,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ActivityRow>, ContextError> {
    if rows.is_empty() {
        return Err(ContextError::EmptyRows);
    }
    let n = hp.n_mol;
    let (actives, others): (Vec<&ActivityRow>, Vec<&ActivityRow>) =
        rows.iter().partition(|r| r.outcome == Outcome::Active);
    let picked = if actives.is_empty() {
        take_random(&others, 2 * n, rng)
    } else {
        let mut picked = take_random(&actives, n, rng);
        picked.extend(take_random(&others, n, rng));
        picked
    };
    Ok(picked.into_iter().cloned().collect())
}

pub fn render_row(row: &ActivityRow) -> String {
    match &row.measure {
        Some(m) => format!("{} {} {}", row.smiles, row.outcome, m),
        None => format!("{} {}", row.smiles, row.outcome),
    }
}

pub fn render_table(sampled: &[ActivityRow]) -> Vec<String> {
    sampled.iter().map(render_row).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssayContextBlock {
    pub summary: AssaySummary,
    pub similarity: f64,
    pub table_lines: Vec<String>,
    pub sampled: Vec<ActivityRow>,
}

impl AssayContextBlock {
    pub fn render(&self) -> String {
        let s = &self.summary;
        let mut out = format!("### AID {}\n", s.aid);
        if s.counterscreen {
            out.push_str(
                "Counterscreen: yes. This assay measures activity against an off-target, \
                 so its active compounds mark structures to stay away from.\n",
            );
        } else {
            out.push_str("Counterscreen: no\n");
        }
        out.push_str(&format!("Summary: {}\n", s.summary));
        out.push_str(&format!("Assay type: {}\n", s.assay_type));
        out.push_str(&format!("Observations: {}\n", s.observations));
        out.push_str("Activity data (SMILES, outcome, measurement):\n");
        for line in &self.table_lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Seed for one assay's sampling, independent of the order assays are processed in.
pub fn assay_seed(seed: u64, aid: u64) -> u64 {
    seed ^ aid.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOutcome {
    Included,
    SummaryFailed,
    NoUsableRows,
    GateExcluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDecision {
    pub aid: u64,
    pub outcome: BlockOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Builds the block for one assay given an already computed summary.
pub fn build_block(
    record: &BioAssayRecord,
    similarity: f64,
    summary: AssaySummary,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<AssayContextBlock, BlockOutcome> {
    let rows = prefilter_rows(&record.rows, hp.max_mol_size);
    if rows.is_empty() {
        return Err(BlockOutcome::NoUsableRows);
    }
    if !passes_gate(&rows, hp) {
        return Err(BlockOutcome::GateExcluded);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(assay_seed(seed, record.aid));
    let sampled = sample_molecules(&rows, hp, &mut rng).map_err(|_| BlockOutcome::NoUsableRows)?;
    Ok(AssayContextBlock {
        summary,
        similarity,
        table_lines: render_table(&sampled),
        sampled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextAssembly {
    pub blocks: Vec<AssayContextBlock>,
    pub decisions: Vec<BlockDecision>,
}

type BlockResult = Result<AssayContextBlock, (BlockOutcome, Option<String>)>;

/// Summarizes the assays concurrently and builds their blocks; block order follows `records`.
pub fn assemble_blocks(
    records: &[(&BioAssayRecord, f64)],
    query_description: &str,
    gateway: &Gateway,
    provider_id: &str,
    template: &Template,
    hp: &Hyperparameters,
    seed: u64,
) -> ContextAssembly {
    let results: Vec<(u64, BlockResult)> = records
        .par_iter()
        .map(|(rec, sim)| {
            let built = summarize_assay(rec, query_description, gateway, provider_id, template)
                .map_err(|e| (BlockOutcome::SummaryFailed, Some(e.to_string())))
                .and_then(|s| build_block(rec, *sim, s, hp, seed).map_err(|o| (o, None)));
            (rec.aid, built)
        })
        .collect();
    let mut blocks = Vec::new();
    let mut decisions = Vec::new();
    for (aid, r) in results {
        match r {
            Ok(b) => {
                blocks.push(b);
                decisions.push(BlockDecision {
                    aid,
                    outcome: BlockOutcome::Included,
                    detail: None,
                });
            }
            Err((outcome, detail)) => decisions.push(BlockDecision { aid, outcome, detail }),
        }
    }
    ContextAssembly { blocks, decisions }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPrompt {
    pub template_id: TemplateId,
    pub template_digest: String,
    pub rendered_text: String,
    pub source_blocks: Vec<u64>,
    pub dropped_blocks: Vec<u64>,
}

/// Renders the generation template. When the prompt exceeds `budget_chars`
/// the least similar blocks are dropped until it fits.
pub fn build_prompt(
    query_description: &str,
    blocks: &[AssayContextBlock],
    template: &Template,
    budget_chars: usize,
) -> Result<GenerationPrompt, ContextError> {
    let mut kept: Vec<&AssayContextBlock> = blocks.iter().collect();
    let mut dropped = Vec::new();
    loop {
        if kept.is_empty() {
            return Err(ContextError::NoUsableBlocks);
        }
        let content: String = kept.iter().map(|b| b.render()).collect::<Vec<_>>().join("\n");
        let text = template.render(&[
            ("{Protein Description}", query_description),
            ("{Assay Content}", &content),
        ])?;
        if text.chars().count() <= budget_chars {
            return Ok(GenerationPrompt {
                template_id: template.id(),
                template_digest: template.digest(),
                rendered_text: text,
                source_blocks: kept.iter().map(|b| b.summary.aid).collect(),
                dropped_blocks: dropped,
            });
        }
        // Least similar goes first; among equals the later block goes.
        let (pos, _) = kept
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| a.similarity.total_cmp(&b.similarity).then(j.cmp(i)))
            .expect("non-empty");
        dropped.push(kept.remove(pos).summary.aid);
    }
}

/// Prompt without retrieved context, for ablation runs.
pub fn build_ablation_prompt(query_description: &str, template: &Template) -> Result<GenerationPrompt, ContextError> {
    Ok(GenerationPrompt {
        template_id: template.id(),
        template_digest: template.digest(),
        rendered_text: template.render(&[("{protein_description}", query_description)])?,
        source_blocks: Vec::new(),
        dropped_blocks: Vec::new(),
    })
}

/// Numbered input list for the optimization template.
pub fn numbered_smiles(smiles: &[String]) -> String {
    smiles
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the optimization template with counter-target context and input molecules.
pub fn build_optimization_prompt(
    counter_description: &str,
    counter_blocks: &[AssayContextBlock],
    inputs: &[String],
    template: &Template,
) -> Result<GenerationPrompt, ContextError> {
    let content: String = counter_blocks.iter().map(|b| b.render()).collect::<Vec<_>>().join("\n");
    let text = template.render(&[
        ("{hERG description}", counter_description),
        ("{hERG BioAssays}", content.trim_end()),
        ("{Input SMILES}", &numbered_smiles(inputs)),
    ])?;
    Ok(GenerationPrompt {
        template_id: template.id(),
        template_digest: template.digest(),
        rendered_text: text,
        source_blocks: counter_blocks.iter().map(|b| b.summary.aid).collect(),
        dropped_blocks: Vec::new(),
    })
}
