//! Query handling, filtering of retrieved assays, and LLM relevance voting.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{canonical_payload, EmbeddingIndex, IndexError, RetrievalHit};
use crate::llm::{extract_structured, ChatRequest, Gateway, LlmError};
use crate::store::{AssayStore, BioAssayRecord};
use crate::templates::{Template, TemplateError};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("no assessment carries a vote")]
    NoAssessments,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    #[default]
    Keywords,
    FullDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub description: String,
    pub keywords: String,
    pub excluded_uniprot_ids: BTreeSet<String>,
    pub mode: QueryMode,
}

impl QuerySpec {
    pub fn new(description: &str) -> Self {
        QuerySpec {
            description: description.to_string(),
            keywords: String::new(),
            excluded_uniprot_ids: BTreeSet::new(),
            mode: QueryMode::default(),
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.description.trim().is_empty() {
            return Err(RetrievalError::InvalidQuery("description is empty".into()));
        }
        if self.mode == QueryMode::Keywords && self.keywords.trim().is_empty() {
            return Err(RetrievalError::InvalidQuery(
                "keywords are empty in keywords mode".into(),
            ));
        }
        Ok(())
    }

    /// Text that is embedded to search the index.
    pub fn search_text(&self) -> &str {
        match self.mode {
            QueryMode::Keywords => &self.keywords,
            QueryMode::FullDescription => &self.description,
        }
    }

    fn is_excluded(&self, record: &BioAssayRecord) -> bool {
        record
            .uniprot_ids()
            .any(|id| self.excluded_uniprot_ids.iter().any(|ex| ex.trim() == id.trim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub max_assay_num: usize,
    pub n_mol: usize,
    pub max_mol_size: usize,
    pub min_mol_num: usize,
    pub retrieval_k: usize,
    pub batch_size: usize,
    pub total_molecules: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            max_assay_num: 10,
            n_mol: 8,
            max_mol_size: 45,
            min_mol_num: 8,
            retrieval_k: 300,
            batch_size: 10,
            total_molecules: 100,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let fields = [
            ("max_assay_num", self.max_assay_num),
            ("n_mol", self.n_mol),
            ("max_mol_size", self.max_mol_size),
            ("min_mol_num", self.min_mol_num),
            ("retrieval_k", self.retrieval_k),
            ("batch_size", self.batch_size),
            ("total_molecules", self.total_molecules),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(RetrievalError::InvalidHyperparameters(format!(
                "{name} must be positive"
            )));
        }
        if self.batch_size > self.total_molecules {
            return Err(RetrievalError::InvalidHyperparameters(
                "batch_size exceeds total_molecules".into(),
            ));
        }
        Ok(())
    }
}

/// Asks the model for comma-separated keywords; an empty reply falls back to the description.
pub fn extract_keywords(
    description: &str,
    gateway: &Gateway,
    provider_id: &str,
    template: &Template,
) -> Result<String, RetrievalError> {
    if description.trim().is_empty() {
        return Err(RetrievalError::InvalidQuery("description is empty".into()));
    }
    let prompt = template.render(&[("{description}", description)])?;
    let reply = gateway.chat(provider_id, &ChatRequest::new(prompt, provider_id))?;
    let reply = reply.trim();
    Ok(if reply.is_empty() {
        description.to_string()
    } else {
        reply.to_string()
    })
}

/// Embeds the query's search text and returns the top `k` hits.
pub fn search(
    query: &QuerySpec,
    index: &EmbeddingIndex,
    gateway: &Gateway,
    k: usize,
) -> Result<Vec<RetrievalHit>, RetrievalError> {
    query.validate()?;
    let v = gateway.embed(query.search_text())?;
    Ok(index.top_k(&v, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOutcome {
    Kept,
    ExcludedUniprot,
    TooFewRows,
    Truncated,
    MissingFromStore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterDecision {
    pub aid: u64,
    pub similarity: f64,
    pub outcome: FilterOutcome,
}

#[derive(Debug, Clone)]
pub struct FilteredAssays<'s> {
    pub records: Vec<(&'s BioAssayRecord, f64)>,
    pub decisions: Vec<FilterDecision>,
}

/// Drops excluded accessions, then assays with fewer than `min_mol_num` rows,
/// then keeps at most `max_assay_num`; input order is preserved.
pub fn filter_assays<'s>(
    hits: &[RetrievalHit],
    store: &'s AssayStore,
    query: &QuerySpec,
    hp: &Hyperparameters,
) -> FilteredAssays<'s> {
    let mut records = Vec::new();
    let mut decisions = Vec::with_capacity(hits.len());
    for hit in hits {
        let outcome = match store.get(hit.aid) {
            None => FilterOutcome::MissingFromStore,
            Some(rec) if query.is_excluded(rec) => FilterOutcome::ExcludedUniprot,
            Some(rec) if rec.rows.len() < hp.min_mol_num => FilterOutcome::TooFewRows,
            Some(_) if records.len() >= hp.max_assay_num => FilterOutcome::Truncated,
            Some(rec) => {
                records.push((rec, hit.similarity));
                FilterOutcome::Kept
            }
        };
        decisions.push(FilterDecision {
            aid: hit.aid,
            similarity: hit.similarity,
            outcome,
        });
    }
    FilteredAssays { records, decisions }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub assessor_model: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abstention {
    pub assessor_model: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceAssessment {
    pub aid: u64,
    pub votes: Vec<Vote>,
    pub abstentions: Vec<Abstention>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    Relevant,
    NotRelevant,
}

impl RelevanceAssessment {
    /// Majority verdict; `None` when every assessor abstained.
    pub fn verdict(&self, ties: TiePolicy) -> Option<bool> {
        if self.votes.is_empty() {
            return None;
        }
        let yes = self.votes.iter().filter(|v| v.relevant).count();
        let no = self.votes.len() - yes;
        Some(match yes.cmp(&no) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => ties == TiePolicy::Relevant,
        })
    }
}

/// One vote per assessor; a failing or unparsable assessor becomes an abstention.
pub fn assess_relevance(
    record: &BioAssayRecord,
    query: &QuerySpec,
    gateway: &Gateway,
    assessors: &[String],
    template: &Template,
) -> Result<RelevanceAssessment, RetrievalError> {
    let payload = canonical_payload(record)?;
    let prompt = template.render(&[
        ("{protein description}", &query.description),
        ("{BioAssay content}", &payload),
    ])?;
    let mut votes = Vec::new();
    let mut abstentions = Vec::new();
    for model in assessors {
        let reply = gateway.chat(model, &ChatRequest::new(prompt.clone(), model.clone()));
        let vote = reply
            .map_err(|e| e.to_string())
            .and_then(|text| extract_structured(&text, &["Relevant"]).map_err(|e| e.to_string()))
            .and_then(|m| match m["Relevant"].as_str() {
                "True" => Ok(true),
                "False" => Ok(false),
                other => Err(format!("unrecognized verdict `{other}`")),
            });
        match vote {
            Ok(relevant) => votes.push(Vote {
                assessor_model: model.clone(),
                relevant,
            }),
            Err(reason) => abstentions.push(Abstention {
                assessor_model: model.clone(),
                reason,
            }),
        }
    }
    Ok(RelevanceAssessment {
        aid: record.aid,
        votes,
        abstentions,
    })
}

/// Assesses several assays concurrently; result order follows `records`.
pub fn assess_all(
    records: &[&BioAssayRecord],
    query: &QuerySpec,
    gateway: &Gateway,
    assessors: &[String],
    template: &Template,
) -> Result<Vec<RelevanceAssessment>, RetrievalError> {
    records
        .par_iter()
        .map(|r| assess_relevance(r, query, gateway, assessors, template))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelevanceGroup {
    High,
    Medium,
    Low,
    No,
}

impl RelevanceGroup {
    pub fn for_fraction(x: f64) -> Self {
        if x >= 0.7 {
            RelevanceGroup::High
        } else if x > 0.4 {
            RelevanceGroup::Medium
        } else if x > 0.1 {
            RelevanceGroup::Low
        } else {
            RelevanceGroup::No
        }
    }
}

/// Fraction of assays judged relevant and its group. Assessments where every
/// assessor abstained are left out of the denominator.
pub fn relevance_group(
    assessments: &[RelevanceAssessment],
    ties: TiePolicy,
) -> Result<(RelevanceGroup, f64), RetrievalError> {
    let verdicts: Vec<bool> = assessments.iter().filter_map(|a| a.verdict(ties)).collect();
    if verdicts.is_empty() {
        return Err(RetrievalError::NoAssessments);
    }
    let x = verdicts.iter().filter(|&&v| v).count() as f64 / verdicts.len() as f64;
    Ok((RelevanceGroup::for_fraction(x), x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHit {
    pub aid: u64,
    pub similarity: f64,
    pub filter: FilterOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<RelevanceAssessment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub query: QuerySpec,
    pub k: usize,
    pub hits: Vec<ReportHit>,
    pub relevance_fraction: Option<f64>,
    pub relevance_group: Option<RelevanceGroup>,
}

impl RetrievalReport {
    pub fn new(
        query: &QuerySpec,
        k: usize,
        decisions: &[FilterDecision],
        assessments: &[RelevanceAssessment],
        ties: TiePolicy,
    ) -> Self {
        let hits = decisions
            .iter()
            .map(|d| ReportHit {
                aid: d.aid,
                similarity: d.similarity,
                filter: d.outcome,
                assessment: assessments.iter().find(|a| a.aid == d.aid).cloned(),
            })
            .collect();
        let grouped = relevance_group(assessments, ties).ok();
        RetrievalReport {
            query: query.clone(),
            k,
            hits,
            relevance_fraction: grouped.map(|g| g.1),
            relevance_group: grouped.map(|g| g.0),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Hits that survived filtering, in retrieval order.
    pub fn kept(&self) -> impl Iterator<Item = &ReportHit> {
        self.hits.iter().filter(|h| h.filter == FilterOutcome::Kept)
    }
}
