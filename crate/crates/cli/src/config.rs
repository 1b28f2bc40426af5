//! TOML run configuration and per-target query specs.

use std::fs;
use std::path::{Path, PathBuf};

use assaymol_core::context::DEFAULT_BUDGET_CHARS;
use assaymol_core::eval::ToolConfig;
use assaymol_core::llm::{sha256_hex, ProviderConfig, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_TEMPERATURE};
use assaymol_core::retrieval::{Hyperparameters, QueryMode, QuerySpec, TiePolicy};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Raw assay documents (`*.json`, `*.jsonl`) and optional `<aid>.csv` tables.
    #[serde(default)]
    pub raw_dir: Option<PathBuf>,
    pub store_dir: PathBuf,
    pub index_file: PathBuf,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub budget_chars: usize,
    pub tie_policy: TiePolicy,
    pub max_in_flight: usize,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            budget_chars: DEFAULT_BUDGET_CHARS,
            tie_policy: TiePolicy::default(),
            max_in_flight: assaymol_core::llm::DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Providers {
    pub generator: Option<ProviderConfig>,
    /// Falls back to the generator when absent.
    pub summarizer: Option<ProviderConfig>,
    pub assessors: Vec<ProviderConfig>,
    pub embedder: Option<ProviderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub embedding_dim: usize,
    /// Kept apart from the run seed so an index stays valid across runs.
    pub embedding_seed: u64,
    /// Number of mock assessors when none are configured.
    pub assessors: usize,
    pub fixture_dir: Option<PathBuf>,
}

impl Default for MockSettings {
    fn default() -> Self {
        MockSettings {
            embedding_dim: 64,
            embedding_seed: 0,
            assessors: 2,
            fixture_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub target_id: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub description_file: Option<PathBuf>,
    #[serde(default)]
    pub excluded_uniprot_ids: Vec<String>,
    #[serde(default)]
    pub mode: QueryMode,
    /// Skips keyword extraction when given.
    #[serde(default)]
    pub keywords: Option<String>,
    #[serde(default)]
    pub reference_score: Option<f64>,
    #[serde(default)]
    pub receptor: Option<PathBuf>,
}

impl TargetSpec {
    pub fn description(&self) -> Result<String, CliError> {
        match (&self.description, &self.description_file) {
            (Some(d), _) if !d.trim().is_empty() => Ok(d.clone()),
            (_, Some(p)) => fs::read_to_string(p).map_err(|e| CliError::config("query.description_file", e)),
            _ => Err(CliError::config("query.description", "missing or empty")),
        }
    }

    pub fn query(&self) -> Result<QuerySpec, CliError> {
        let mut q = QuerySpec::new(&self.description()?);
        q.excluded_uniprot_ids = self.excluded_uniprot_ids.iter().cloned().collect();
        q.mode = self.mode;
        if let Some(k) = &self.keywords {
            q.keywords = k.clone();
        }
        Ok(q)
    }

    /// Directory name derived from the target id.
    pub fn dir_name(&self) -> String {
        self.target_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterConfig {
    pub description: String,
    /// Counter-target assays; retrieved from the index when empty.
    #[serde(default)]
    pub aids: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub score_files: Vec<PathBuf>,
    pub reference_score: Option<f64>,
    /// Score file whose `vina_dock` rows form the improvement baseline.
    pub baseline_file: Option<PathBuf>,
    pub dock_tool: Option<ToolConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub paths: Paths,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default)]
    pub providers: Providers,
    #[serde(default)]
    pub mock: MockSettings,
    #[serde(default)]
    pub query: Option<TargetSpec>,
    #[serde(default)]
    pub counter: Option<CounterConfig>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        resolve(base, p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config("config", e.message()))
    }

    /// Reads a config file; relative paths are taken relative to its directory.
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if seed_override.is_some() {
            cfg.seed = seed_override;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve_opt(base, &mut self.paths.raw_dir);
        resolve(base, &mut self.paths.store_dir);
        resolve(base, &mut self.paths.index_file);
        resolve_opt(base, &mut self.paths.template_dir);
        resolve(base, &mut self.paths.output_dir);
        resolve_opt(base, &mut self.mock.fixture_dir);
        if let Some(q) = &mut self.query {
            resolve_opt(base, &mut q.description_file);
            resolve_opt(base, &mut q.receptor);
        }
        for f in &mut self.evaluation.score_files {
            resolve(base, f);
        }
        resolve_opt(base, &mut self.evaluation.baseline_file);
        if let Some(t) = &mut self.evaluation.dock_tool {
            // Bare program names are looked up on PATH.
            if t.program.components().count() > 1 {
                resolve(base, &mut t.program);
            }
            resolve_opt(base, &mut t.receptor);
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::config("seed", "required; set it in the config or pass --seed"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.seed()?;
        self.hyperparameters
            .validate()
            .map_err(|e| CliError::config("hyperparameters", e))?;
        let g = &self.generation;
        if !(0.0..=2.0).contains(&g.temperature) {
            return Err(CliError::config("generation.temperature", "must lie in [0, 2]"));
        }
        if g.max_output_tokens == 0 {
            return Err(CliError::config("generation.max_output_tokens", "must be positive"));
        }
        if g.budget_chars == 0 {
            return Err(CliError::config("generation.budget_chars", "must be positive"));
        }
        if self.mock.embedding_dim == 0 {
            return Err(CliError::config("mock.embedding_dim", "must be positive"));
        }
        let must_exist = [
            ("paths.raw_dir", self.paths.raw_dir.as_ref()),
            ("paths.template_dir", self.paths.template_dir.as_ref()),
            ("mock.fixture_dir", self.mock.fixture_dir.as_ref()),
            ("evaluation.baseline_file", self.evaluation.baseline_file.as_ref()),
        ];
        for (field, p) in must_exist {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CliError::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        for f in &self.evaluation.score_files {
            if !f.exists() {
                return Err(CliError::config(
                    "evaluation.score_files",
                    format!("{} does not exist", f.display()),
                ));
            }
        }
        for (name, p) in [
            ("generator", &self.providers.generator),
            ("summarizer", &self.providers.summarizer),
            ("embedder", &self.providers.embedder),
        ] {
            if let Some(p) = p {
                p.validate()
                    .map_err(|e| CliError::config(&format!("providers.{name}"), e))?;
            }
        }
        Ok(())
    }
}

/// Everything that determines a run's outputs; hashed to name the run directory.
#[derive(Debug, Serialize)]
pub struct RunIdentity<'a> {
    pub config: &'a RunConfig,
    pub mock_llm: bool,
    pub targets: &'a [TargetSpec],
}

impl RunIdentity<'_> {
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_string(self).expect("config serializes"))
    }
}

/// One JSON object per line; blank lines are skipped.
pub fn read_targets(path: &Path) -> Result<Vec<TargetSpec>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::config("--targets", format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut t: TargetSpec =
            serde_json::from_str(line).map_err(|e| CliError::config("--targets", format!("line {}: {e}", i + 1)))?;
        resolve_opt(&base, &mut t.description_file);
        resolve_opt(&base, &mut t.receptor);
        out.push(t);
    }
    if out.is_empty() {
        return Err(CliError::config("--targets", "no targets"));
    }
    let mut ids: Vec<&str> = out.iter().map(|t| t.target_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::config("--targets", "duplicate target_id"));
    }
    Ok(out)
}
