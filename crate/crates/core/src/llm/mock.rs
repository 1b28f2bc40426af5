use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use assaymol_chem::parse_smiles;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sha256_hex, ChatProvider, ChatRequest, Embedder, LlmError};
use crate::index::EmbeddingVector;

/// Recorded replies for one prompt. Repeated calls cycle through `responses`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default)]
    pub prompt_sha256: Option<String>,
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub responses: Vec<String>,
}

impl Fixture {
    pub fn for_prompt(prompt: &str, responses: Vec<String>) -> Self {
        Fixture {
            prompt_sha256: Some(sha256_hex(prompt)),
            prompt: None,
            response: None,
            responses,
        }
    }

    fn key(&self) -> Option<String> {
        self.prompt_sha256
            .clone()
            .or_else(|| self.prompt.as_deref().map(sha256_hex))
    }

    fn replies(&self) -> Vec<String> {
        let mut all: Vec<String> = self.response.iter().cloned().collect();
        all.extend(self.responses.iter().cloned());
        all
    }
}

/// Prompt families the fallback generator knows how to answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Keywords,
    Summarization,
    Relevance,
    Optimization,
    Generation,
    Other,
}

pub const KEYWORD_INSTRUCTION: &str =
    "Extract the protein/phenotype keywords from the following description as a comma-separated list.";

impl PromptKind {
    pub fn classify(prompt: &str) -> Self {
        if prompt.starts_with(KEYWORD_INSTRUCTION) {
            PromptKind::Keywords
        } else if prompt.contains("\"BioAssay_Summary\"") {
            PromptKind::Summarization
        } else if prompt.contains("\"Relevant\"") {
            PromptKind::Relevance
        } else if prompt.contains("optimize the following ten candidate SMILES") {
            PromptKind::Optimization
        } else if prompt.contains("[BOS]") {
            PromptKind::Generation
        } else {
            PromptKind::Other
        }
    }
}

/// Offline chat provider: fixture replies keyed by prompt hash, otherwise a
/// seeded generator that answers each prompt family in the expected format.
pub struct MockChatProvider {
    id: String,
    seed: u64,
    fixtures: BTreeMap<String, Vec<String>>,
    served: Mutex<BTreeMap<String, usize>>,
}

impl MockChatProvider {
    pub fn new(id: &str, seed: u64) -> Self {
        MockChatProvider {
            id: id.to_string(),
            seed,
            fixtures: BTreeMap::new(),
            served: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_fixture(mut self, fixture: Fixture) -> Self {
        if let Some(key) = fixture.key() {
            self.fixtures.entry(key).or_default().extend(fixture.replies());
        }
        self
    }

    /// Loads every `*.jsonl` file in `dir` (one fixture object per line).
    pub fn with_fixture_dir(mut self, dir: &Path) -> Result<Self, LlmError> {
        let bad = |e: String| LlmError::InvalidRequest(format!("fixture: {e}"));
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| bad(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for p in paths {
            let text = fs::read_to_string(&p).map_err(|e| bad(e.to_string()))?;
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let f: Fixture =
                    serde_json::from_str(line).map_err(|e| bad(format!("{}:{}: {e}", p.display(), n + 1)))?;
                self = self.with_fixture(f);
            }
        }
        Ok(self)
    }

    fn rng_for(&self, request: &ChatRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(request.seed.unwrap_or(0).to_le_bytes());
        h.update(request.prompt.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl ChatProvider for MockChatProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let key = sha256_hex(&request.prompt);
        if let Some(replies) = self.fixtures.get(&key).filter(|r| !r.is_empty()) {
            let mut served = self.served.lock().expect("mock poisoned");
            let n = served.entry(key).or_insert(0);
            let reply = replies[*n % replies.len()].clone();
            *n += 1;
            return Ok(reply);
        }
        let mut rng = self.rng_for(request);
        let prompt = request.prompt.as_str();
        Ok(match PromptKind::classify(prompt) {
            PromptKind::Keywords => keywords_reply(prompt),
            PromptKind::Summarization => summary_reply(prompt),
            PromptKind::Relevance => relevance_reply(prompt, &mut rng),
            PromptKind::Optimization => optimization_reply(prompt, &mut rng),
            PromptKind::Generation => generation_reply(prompt, &mut rng),
            PromptKind::Other => format!("mock reply {:016x}", rng.gen::<u64>()),
        })
    }
}

const STOPWORDS: &[&str] = &[
    "about",
    "across",
    "after",
    "also",
    "among",
    "which",
    "their",
    "there",
    "these",
    "those",
    "through",
    "while",
    "within",
    "other",
    "protein",
    "function",
    "functions",
    "involved",
    "including",
    "plays",
    "role",
    "activity",
];

fn keywords_reply(prompt: &str) -> String {
    let body = prompt.strip_prefix(KEYWORD_INSTRUCTION).unwrap_or(prompt);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for word in body.split(|c: char| !(c.is_ascii_alphanumeric() || c == '-')) {
        let w = word.trim_matches('-');
        let symbol_like =
            w.len() >= 3 && w.chars().any(|c| c.is_ascii_uppercase()) && w.chars().any(|c| c.is_ascii_digit());
        let long_word = w.len() >= 7 && !STOPWORDS.contains(&w.to_ascii_lowercase().as_str());
        if (symbol_like || long_word) && seen.insert(w.to_ascii_lowercase()) {
            out.push(w.to_string());
        }
        if out.len() == 6 {
            break;
        }
    }
    out.join(", ")
}

fn section_after<'a>(prompt: &'a str, heading: &str) -> &'a str {
    prompt.rfind(heading).map_or("", |i| &prompt[i + heading.len()..])
}

fn summary_reply(prompt: &str) -> String {
    let assay = section_after(prompt, "## BioAssay JSON");
    let (title, description) = match serde_json::from_str::<serde_json::Value>(assay.trim()) {
        Ok(v) => (
            v.get("title").and_then(|t| t.as_str()).unwrap_or("").to_string(),
            v.get("description").and_then(|t| t.as_str()).unwrap_or("").to_string(),
        ),
        Err(_) => (String::new(), assay.trim().to_string()),
    };
    let lower = assay.to_ascii_lowercase();
    let assay_type = [
        ("fluoresc", "Fluorescence Assay"),
        ("luminesc", "Luminescence Assay"),
        ("luciferase", "Luminescence Assay"),
        ("radioligand", "Radioligand Binding"),
        ("binding", "Binding Assay"),
        ("inhibit", "Enzymatic Inhibition"),
    ]
    .iter()
    .find(|(k, _)| lower.contains(k))
    .map_or("Biochemical Assay", |(_, v)| v);
    let counter = ["counterscreen", "counter screen", "counter-screen"]
        .iter()
        .any(|k| lower.contains(k));
    let first_sentence: String = description
        .split_inclusive(". ")
        .next()
        .unwrap_or("")
        .chars()
        .take(240)
        .collect();
    let summary = if title.is_empty() {
        first_sentence.trim().to_string()
    } else {
        format!("{}. {}", title.trim_end_matches('.'), first_sentence.trim())
    };
    let reply = serde_json::json!({
        "BioAssay_Summary": if summary.is_empty() { "Assay summary unavailable.".to_string() } else { summary },
        "Assay_Type": assay_type,
        "Summary_of_Observations": "Outcomes are reported per tested compound.",
        "CounterScreen": if counter { "True" } else { "False" },
    });
    format!("```json\n{}\n```", serde_json::to_string_pretty(&reply).expect("json"))
}

fn symbol_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| w.len() >= 3 && w.chars().any(|c| c.is_ascii_uppercase()) && w.chars().any(|c| c.is_ascii_digit()))
        .map(str::to_ascii_uppercase)
        .collect()
}

fn relevance_reply(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let (query, assay) = match prompt.rfind("## BioAssay JSON") {
        Some(i) => (section_after(&prompt[..i], "## Query Protein"), &prompt[i..]),
        None => ("", prompt),
    };
    let shared = !symbol_tokens(query).is_disjoint(&symbol_tokens(assay));
    let relevant = shared || rng.gen_bool(0.3);
    format!(
        "```json\n{{\n  \"Relevant\": \"{}\"\n}}\n```",
        if relevant { "True" } else { "False" }
    )
}

const CORES: &[&str] = &[
    "c1ccccc1",
    "c1ccncc1",
    "c1ccc2[nH]ccc2c1",
    "c1ccc2ncccc2c1",
    "C1CCNCC1",
    "C1CCOCC1",
    "c1cc[nH]n1",
    "c1ncncn1",
    "C1CCN(CC1)C(=O)",
    "c1ccc(cc1)Nc1ncccn1",
    "c1ccc2c(c1)OCO2",
    "O=C1NC(=O)CS1",
    "c1csc(n1)N",
    "C1CC1",
];

const CAPS: &[&str] = &[
    "",
    "C",
    "CC",
    "O",
    "N",
    "F",
    "Cl",
    "CO",
    "CN",
    "OC",
    "NC(=O)",
    "CS(=O)(=O)N",
    "OCC",
    "FC(F)(F)",
];

fn random_molecule(rng: &mut ChaCha8Rng) -> String {
    for _ in 0..20 {
        let head = CAPS.choose(rng).expect("non-empty");
        let core = CORES.choose(rng).expect("non-empty");
        let link = ["", "C", "CC(=O)N", "N", "O"].choose(rng).expect("non-empty");
        let tail = CORES.choose(rng).expect("non-empty");
        let candidate = if rng.gen_bool(0.5) {
            format!("{head}{core}{link}{tail}")
        } else {
            format!("{head}{core}")
        };
        if parse_smiles(&candidate).is_ok() {
            return candidate;
        }
    }
    "c1ccccc1O".to_string()
}

fn variant_of(smiles: &str, rng: &mut ChaCha8Rng) -> String {
    for _ in 0..10 {
        let cap = ["O", "F", "C", "N", "Cl", "C(=O)O", "OC"]
            .choose(rng)
            .expect("non-empty");
        let candidate = if rng.gen_bool(0.5) {
            format!("{cap}{smiles}")
        } else {
            format!("{smiles}{cap}")
        };
        if parse_smiles(&candidate).is_ok() {
            return candidate;
        }
    }
    smiles.to_string()
}

/// SMILES that open a line of an activity table or a numbered list in the prompt.
fn context_smiles(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let first = line.split_whitespace().next()?;
            (first.len() >= 4 && parse_smiles(first).is_ok_and(|m| m.heavy_atom_count() >= 4))
                .then(|| first.to_string())
        })
        .collect()
}

fn numbered(molecules: &[String]) -> String {
    let mut out = String::from("3. Generated Molecules\n");
    for (i, s) in molecules.iter().enumerate() {
        out.push_str(&format!("{}. [BOS] {s} [EOS]\n", i + 1));
    }
    out
}

fn generation_reply(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let context = context_smiles(prompt);
    let molecules: Vec<String> = (0..10)
        .map(|_| match context.choose(rng) {
            Some(s) if rng.gen_bool(0.5) => variant_of(s, rng),
            _ => random_molecule(rng),
        })
        .collect();
    numbered(&molecules)
}

fn optimization_reply(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let start = prompt.find("optimize the following ten candidate SMILES").unwrap_or(0);
    let end = prompt
        .rfind("The output should follow the same format")
        .unwrap_or(prompt.len());
    let section = &prompt[start..end.max(start)];
    let inputs: Vec<String> = section
        .lines()
        .skip(1)
        .filter_map(|l| {
            let t = l.trim();
            let t = t.split_once(". ").map_or(
                t,
                |(n, rest)| if n.chars().all(|c| c.is_ascii_digit()) { rest } else { t },
            );
            (!t.is_empty()).then(|| t.to_string())
        })
        .collect();
    let mut molecules: Vec<String> = inputs.iter().take(10).map(|s| variant_of(s, rng)).collect();
    while molecules.len() < 10 {
        molecules.push(random_molecule(rng));
    }
    numbered(&molecules)
}

/// Seeded feature-hashing embedder producing unit vectors.
pub struct MockEmbedder {
    id: String,
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        MockEmbedder {
            id: format!("mock-embed-{dim}"),
            dim,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn hash(&self, token: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in token.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= h >> 29;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^ (h >> 32)
    }
}

impl Embedder for MockEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty text".into()));
        }
        let mut v = vec![0.0f64; self.dim];
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        let mut add = |feature: &str, weight: f64| {
            let h = self.hash(feature);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign * weight;
        };
        for t in &tokens {
            add(t, 1.0);
        }
        for pair in tokens.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        if v.iter().all(|&x| x == 0.0) {
            let h = self.hash(text);
            v[(h % self.dim as u64) as usize] = 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        Ok(EmbeddingVector::new(v)?)
    }
}
