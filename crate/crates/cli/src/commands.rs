//! Pipeline commands. Each writes its artifacts and returns a one-line summary
//! per target.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use assaymol_core::context::{assemble_blocks, build_prompt, ContextAssembly};
use assaymol_core::eval::{
    aggregate_by_group, aggregate_targets, aggregate_to_csv, context_similarity_analysis, evaluate_target, herg_deltas,
    read_score_file, reports_to_csv, run_external_tool, write_score_file, EvalError, EvalReport, ScoreKind, ScoreTable,
    TargetInput, ToolConfig, IMPROVEMENT_AVERAGING,
};
use assaymol_core::generation::{
    optimize_all, run_generation, CounterContext, GenerationError, GenerationRun, OptimizedPair, RunSettings,
};
use assaymol_core::index::{canonical_payload, EmbeddingIndex, IndexBuilder};
use assaymol_core::retrieval::{
    assess_all, extract_keywords, filter_assays, search, QueryMode, QuerySpec, RetrievalReport,
};
use assaymol_core::store::{AssayStore, BioAssayRecord, StoreBuilder};
use assaymol_core::templates::{Template, TemplateId};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{read_targets, RunConfig, RunIdentity, TargetSpec};
use crate::error::CliError;
use crate::providers::{build_roles, role_ids, Roles};

pub const DEDUP_POLICY: &str = "canonical dedup across batches; validity over unique generated strings";

pub struct Templates {
    pub summarization: Template,
    pub generation: Template,
    pub relevance: Template,
    pub optimization: Template,
    pub keywords: Template,
    digests: BTreeMap<String, String>,
}

impl Templates {
    fn load(dir: Option<&Path>) -> Result<Self, CliError> {
        let mut digests = BTreeMap::new();
        let mut get = |id: TemplateId| -> Result<Template, CliError> {
            let t = Template::load(dir, id)?;
            digests.insert(id.file_name().to_string(), t.digest());
            Ok(t)
        };
        let summarization = get(TemplateId::Summarization)?;
        let generation = get(TemplateId::Generation)?;
        let relevance = get(TemplateId::Relevance)?;
        let optimization = get(TemplateId::Optimization)?;
        let keywords = get(TemplateId::Keywords)?;
        get(TemplateId::Ablation)?;
        Ok(Templates {
            summarization,
            generation,
            relevance,
            optimization,
            keywords,
            digests,
        })
    }
}

/// Resolved configuration plus the run directory it maps to.
pub struct Session {
    pub cfg: RunConfig,
    pub mock: bool,
    pub targets: Vec<TargetSpec>,
    pub parallel: usize,
    pub digest: String,
    pub run_dir: PathBuf,
    pub templates: Templates,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_digest: &'a str,
    seed: u64,
    mock_llm: bool,
    hyperparameters: &'a assaymol_core::retrieval::Hyperparameters,
    generation: &'a crate::config::GenerationSettings,
    template_digests: &'a BTreeMap<String, String>,
    providers: crate::providers::RoleIds,
    targets: Vec<&'a str>,
    dedup_policy: &'static str,
    improvement_averaging: &'static str,
}

impl Session {
    pub fn new(cfg: RunConfig, mock: bool, targets_file: Option<&Path>, parallel: usize) -> Result<Self, CliError> {
        let targets = match targets_file {
            Some(p) => read_targets(p)?,
            None => cfg.query.iter().cloned().collect(),
        };
        let digest = RunIdentity {
            config: &cfg,
            mock_llm: mock,
            targets: &targets,
        }
        .digest();
        let run_dir = cfg.paths.output_dir.join(format!("run-{}", &digest[..16]));
        let templates = Templates::load(cfg.paths.template_dir.as_deref())?;
        Ok(Session {
            cfg,
            mock,
            targets,
            parallel: parallel.max(1),
            digest,
            run_dir,
            templates,
        })
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed.expect("validated config has a seed")
    }

    fn roles(&self) -> Result<Roles, CliError> {
        fs::create_dir_all(&self.run_dir)?;
        build_roles(&self.cfg, self.mock, Some(&self.run_dir.join("calls.jsonl")))
    }

    pub fn target_dir(&self, t: &TargetSpec) -> PathBuf {
        self.run_dir.join("targets").join(t.dir_name())
    }

    /// Same content for every command of a run.
    pub fn write_manifest(&self) -> Result<(), CliError> {
        let m = Manifest {
            config_digest: &self.digest,
            seed: self.seed(),
            mock_llm: self.mock,
            hyperparameters: &self.cfg.hyperparameters,
            generation: &self.cfg.generation,
            template_digests: &self.templates.digests,
            providers: role_ids(&self.cfg, self.mock),
            targets: self.targets.iter().map(|t| t.target_id.as_str()).collect(),
            dedup_policy: DEDUP_POLICY,
            improvement_averaging: IMPROVEMENT_AVERAGING,
        };
        write_json(&self.run_dir.join("manifest.json"), &m)
    }

    fn each_target<F>(&self, f: F) -> Result<Vec<String>, CliError>
    where
        F: Fn(&TargetSpec, &Path) -> Result<String, CliError> + Sync,
    {
        if self.targets.is_empty() {
            return Err(CliError::config(
                "query",
                "no target; add a [query] section or pass --targets",
            ));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallel)
            .build()
            .map_err(|e| CliError::Input(e.to_string()))?;
        let results: Vec<Result<String, CliError>> = pool.install(|| {
            self.targets
                .par_iter()
                .map(|t| {
                    let dir = self.target_dir(t);
                    fs::create_dir_all(&dir)?;
                    f(t, &dir)
                })
                .collect()
        });
        results.into_iter().collect()
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path, producer: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|_| CliError::missing(producer))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn record_timing(dir: &Path, step: &str, started: Instant) -> Result<(), CliError> {
    let path = dir.join("timings.json");
    let mut timings: BTreeMap<String, u128> = fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    timings.insert(step.to_string(), started.elapsed().as_millis());
    write_json(&path, &timings)
}

fn load_store(s: &Session) -> Result<AssayStore, CliError> {
    if !AssayStore::manifest_path(&s.cfg.paths.store_dir).exists() {
        return Err(CliError::missing("ingest"));
    }
    Ok(AssayStore::load(&s.cfg.paths.store_dir)?)
}

fn load_index(s: &Session) -> Result<EmbeddingIndex, CliError> {
    if !s.cfg.paths.index_file.exists() {
        return Err(CliError::missing("index"));
    }
    Ok(EmbeddingIndex::load(&s.cfg.paths.index_file)?)
}

fn read_lines(path: &Path, producer: &str) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|_| CliError::missing(producer))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_ingest(s: &Session) -> Result<String, CliError> {
    let raw = s
        .cfg
        .paths
        .raw_dir
        .as_ref()
        .ok_or_else(|| CliError::config("paths.raw_dir", "required for ingest"))?;
    let mut entries: Vec<PathBuf> = fs::read_dir(raw)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    let ext = |p: &Path| p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let mut b = StoreBuilder::new();
    for p in entries.iter().filter(|p| ext(p).as_deref() == Some("json")) {
        let text = fs::read_to_string(p)?;
        b.ingest_json(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    }
    for p in entries.iter().filter(|p| ext(p).as_deref() == Some("jsonl")) {
        for (i, line) in fs::read_to_string(p)?.lines().enumerate() {
            if !line.trim().is_empty() {
                b.ingest_json(line)
                    .map_err(|e| CliError::Input(format!("{}:{}: {e}", p.display(), i + 1)))?;
            }
        }
    }
    for p in entries.iter().filter(|p| ext(p).as_deref() == Some("csv")) {
        let aid: u64 = p
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::Input(format!("{}: table files must be named <aid>.csv", p.display())))?;
        b.attach_table(aid, fs::File::open(p)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    }
    let store = b.freeze();
    let manifest = store.persist(&s.cfg.paths.store_dir)?;
    let rows: usize = manifest.assays.iter().map(|a| a.rows).sum();
    Ok(format!(
        "ingested {} assays ({rows} rows) into {}",
        manifest.assays.len(),
        s.cfg.paths.store_dir.display()
    ))
}

pub fn cmd_index(s: &Session) -> Result<String, CliError> {
    let store = load_store(s)?;
    let roles = s.roles()?;
    roles.require_embedder()?;
    let records: Vec<&BioAssayRecord> = store.records().collect();
    if records.is_empty() {
        return Err(CliError::Input("store is empty".into()));
    }
    let vectors = records
        .par_iter()
        .map(|r| {
            let payload = canonical_payload(r)?;
            Ok((r.aid, roles.gateway.embed(&payload)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut b = IndexBuilder::new(vectors[0].1.dim());
    for (aid, v) in &vectors {
        b.add(*aid, v)?;
    }
    let index = b.build();
    if let Some(parent) = s.cfg.paths.index_file.parent() {
        fs::create_dir_all(parent)?;
    }
    index.save(&s.cfg.paths.index_file)?;
    Ok(format!(
        "indexed {} assays (dim {}) into {}",
        index.len(),
        index.dim(),
        s.cfg.paths.index_file.display()
    ))
}

pub fn cmd_retrieve(s: &Session) -> Result<String, CliError> {
    let store = load_store(s)?;
    let index = load_index(s)?;
    let roles = s.roles()?;
    roles.require_embedder()?;
    s.write_manifest()?;
    let hp = &s.cfg.hyperparameters;
    let lines = s.each_target(|t, dir| {
        let started = Instant::now();
        let mut q = t.query()?;
        if q.mode == QueryMode::Keywords && q.keywords.trim().is_empty() {
            q.keywords = extract_keywords(
                &q.description,
                &roles.gateway,
                roles.summarizer()?,
                &s.templates.keywords,
            )?;
        }
        let hits = search(&q, &index, &roles.gateway, hp.retrieval_k)?;
        let filtered = filter_assays(&hits, &store, &q, hp);
        let records: Vec<&BioAssayRecord> = filtered.records.iter().map(|(r, _)| *r).collect();
        let assessments = if roles.assessors.is_empty() {
            Vec::new()
        } else {
            assess_all(&records, &q, &roles.gateway, &roles.assessors, &s.templates.relevance)?
        };
        let report = RetrievalReport::new(
            &q,
            hp.retrieval_k,
            &filtered.decisions,
            &assessments,
            s.cfg.generation.tie_policy,
        );
        write_json(&dir.join("retrieval.json"), &report)?;
        record_timing(dir, "retrieve", started)?;
        let group = report
            .relevance_group
            .map_or_else(|| "n/a".to_string(), |g| format!("{g:?}"));
        Ok(format!(
            "{}: {} hits, {} assays kept, relevance {group}",
            t.target_id,
            hits.len(),
            records.len()
        ))
    })?;
    Ok(lines.join("\n"))
}

fn kept_records<'s>(
    report: &RetrievalReport,
    store: &'s AssayStore,
) -> Result<Vec<(&'s BioAssayRecord, f64)>, CliError> {
    report
        .kept()
        .map(|h| Ok((store.lookup(h.aid)?, h.similarity)))
        .collect()
}

fn write_generation(dir: &Path, run: &GenerationRun) -> Result<(), CliError> {
    let batch_dir = dir.join("batches");
    fs::create_dir_all(&batch_dir)?;
    for b in &run.batches {
        fs::write(batch_dir.join(format!("batch_{:03}.txt", b.batch_index)), &b.raw_text)?;
    }
    write_json(&dir.join("generation.json"), run)?;
    write_lines(&dir.join("molecules.txt"), &run.molecules())
}

pub fn cmd_generate(s: &Session) -> Result<String, CliError> {
    let store = load_store(s)?;
    let roles = s.roles()?;
    s.write_manifest()?;
    let hp = &s.cfg.hyperparameters;
    let lines = s.each_target(|t, dir| {
        let started = Instant::now();
        let report: RetrievalReport = read_json(&dir.join("retrieval.json"), "retrieve")?;
        let records = kept_records(&report, &store)?;
        let description = &report.query.description;
        let asm = assemble_blocks(
            &records,
            description,
            &roles.gateway,
            roles.summarizer()?,
            &s.templates.summarization,
            hp,
            s.seed(),
        );
        write_json(&dir.join("context.json"), &asm)?;
        let prompt = build_prompt(
            description,
            &asm.blocks,
            &s.templates.generation,
            s.cfg.generation.budget_chars,
        )?;
        fs::write(dir.join("prompt.txt"), &prompt.rendered_text)?;
        write_json(&dir.join("prompt.json"), &prompt)?;
        let mut settings = RunSettings::new(&t.target_id, roles.generator()?, s.seed());
        settings.temperature = s.cfg.generation.temperature;
        settings.max_output_tokens = s.cfg.generation.max_output_tokens;
        let run = match run_generation(&prompt, hp, &roles.gateway, &settings) {
            Ok(run) => run,
            Err(GenerationError::Aborted { partial, source }) => {
                write_generation(dir, &partial)?;
                return Err(CliError::Provider(format!(
                    "{}: aborted after {} batches ({source}); partial results saved",
                    t.target_id,
                    partial.batches.len()
                )));
            }
            Err(e) => return Err(e.into()),
        };
        write_generation(dir, &run)?;
        record_timing(dir, "generate", started)?;
        Ok(format!(
            "{}: {} batches, {} blocks, {} unique valid molecules, validity {:.4}",
            t.target_id,
            run.batches.len(),
            prompt.source_blocks.len(),
            run.unique_canonical.len(),
            run.validity
        ))
    })?;
    Ok(lines.join("\n"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OptimizationArtifact {
    pub counter_description: String,
    pub counter_context: ContextAssembly,
    pub pairs: Vec<OptimizedPair>,
}

pub fn cmd_optimize(s: &Session) -> Result<String, CliError> {
    let counter = s
        .cfg
        .counter
        .as_ref()
        .ok_or_else(|| CliError::config("counter", "required for optimize"))?;
    let store = load_store(s)?;
    let roles = s.roles()?;
    s.write_manifest()?;
    let hp = &s.cfg.hyperparameters;
    let counter_records: Vec<(&BioAssayRecord, f64)> = if counter.aids.is_empty() {
        let index = load_index(s)?;
        let mut q = QuerySpec::new(&counter.description);
        q.mode = QueryMode::FullDescription;
        let hits = search(&q, &index, &roles.gateway, hp.retrieval_k)?;
        filter_assays(&hits, &store, &q, hp).records
    } else {
        counter
            .aids
            .iter()
            .map(|&aid| store.lookup(aid).map(|r| (r, 1.0)))
            .collect::<Result<_, _>>()?
    };
    let counter_context = assemble_blocks(
        &counter_records,
        &counter.description,
        &roles.gateway,
        roles.summarizer()?,
        &s.templates.summarization,
        hp,
        s.seed(),
    );
    let lines = s.each_target(|t, dir| {
        let started = Instant::now();
        let molecules = read_lines(&dir.join("molecules.txt"), "generate")?;
        if molecules.is_empty() {
            return Ok(format!("{}: no molecules to optimize", t.target_id));
        }
        let ctx = CounterContext {
            description: &counter.description,
            blocks: &counter_context.blocks,
            template: &s.templates.optimization,
        };
        let pairs = optimize_all(&molecules, &ctx, &roles.gateway, roles.generator()?, s.seed())?;
        let optimized: Vec<String> = pairs.iter().map(|p| p.optimized.clone()).collect();
        write_lines(&dir.join("optimized.txt"), &optimized)?;
        let fallbacks = pairs.iter().filter(|p| p.fallback).count();
        write_json(
            &dir.join("optimization.json"),
            &OptimizationArtifact {
                counter_description: counter.description.clone(),
                counter_context: counter_context.clone(),
                pairs,
            },
        )?;
        record_timing(dir, "optimize", started)?;
        Ok(format!(
            "{}: optimized {} molecules against {} counter assays, {fallbacks} fallbacks",
            t.target_id,
            molecules.len(),
            counter_context.blocks.len()
        ))
    })?;
    Ok(lines.join("\n"))
}

fn load_scores(files: &[PathBuf]) -> Result<ScoreTable, CliError> {
    let mut table = ScoreTable::default();
    for f in files {
        let recs = read_score_file(fs::File::open(f)?).map_err(|e| CliError::Input(format!("{}: {e}", f.display())))?;
        table.extend(&recs);
    }
    Ok(table)
}

fn baseline(path: Option<&Path>) -> Result<Option<Vec<f64>>, CliError> {
    let Some(p) = path else { return Ok(None) };
    let recs = read_score_file(fs::File::open(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    let values: Vec<f64> = recs
        .iter()
        .filter(|r| r.score_kind == ScoreKind::VinaDock)
        .map(|r| r.value)
        .collect();
    if values.is_empty() {
        return Err(CliError::config("evaluation.baseline_file", "has no vina_dock rows"));
    }
    Ok(Some(values))
}

pub fn cmd_evaluate(s: &Session) -> Result<String, CliError> {
    s.write_manifest()?;
    let imported = load_scores(&s.cfg.evaluation.score_files)?;
    let base = baseline(s.cfg.evaluation.baseline_file.as_deref())?;
    let reports = s.each_target(|t, dir| {
        let started = Instant::now();
        let molecules = read_lines(&dir.join("molecules.txt"), "generate")?;
        let run: GenerationRun = read_json(&dir.join("generation.json"), "generate")?;
        let mut scores = imported.clone();
        if let Some(tool) = &s.cfg.evaluation.dock_tool {
            let unscored: Vec<String> = molecules
                .iter()
                .filter(|m| scores.get(m, ScoreKind::VinaDock).is_none())
                .cloned()
                .collect();
            let tool = ToolConfig {
                receptor: t.receptor.clone().or_else(|| tool.receptor.clone()),
                ..tool.clone()
            };
            let out = run_external_tool(&unscored, &tool, ScoreKind::VinaDock)?;
            let mut buf = Vec::new();
            write_score_file(&out.records, &mut buf)?;
            fs::write(dir.join("docking_scores.csv"), buf)?;
            write_lines(&dir.join("docking_missing.txt"), &out.missing)?;
            scores.extend(&out.records);
        }
        let retrieval: Option<RetrievalReport> = read_json(&dir.join("retrieval.json"), "retrieve").ok();
        let reference = t.reference_score.or(s.cfg.evaluation.reference_score);
        let input = TargetInput {
            target_id: &t.target_id,
            molecules: &molecules,
            validity: run.validity,
            reference_score: reference,
            baseline_scores: base.as_deref(),
            relevance_group: retrieval.as_ref().and_then(|r| r.relevance_group),
        };
        let report = evaluate_target(&input, &scores)?;
        write_json(&dir.join("report.json"), &report)?;

        if let Ok(opt) = read_json::<OptimizationArtifact>(&dir.join("optimization.json"), "optimize") {
            let deltas = herg_deltas(
                opt.pairs.iter().map(|p| (p.original.as_str(), p.optimized.as_str())),
                &scores,
            );
            write_json(&dir.join("herg_deltas.json"), &deltas)?;
        }
        if let (Some(r), Ok(ctx)) = (
            reference,
            read_json::<ContextAssembly>(&dir.join("context.json"), "generate"),
        ) {
            let rows: Vec<_> = ctx.blocks.iter().flat_map(|b| b.sampled.iter().cloned()).collect();
            match context_similarity_analysis(&molecules, &rows, &scores, r) {
                Ok(a) => write_json(&dir.join("context_similarity.json"), &a)?,
                Err(EvalError::NoHighScoringContext) => write_json(
                    &dir.join("context_similarity.json"),
                    &serde_json::json!({"skipped": "no context molecule scores better than the reference"}),
                )?,
                Err(e) => return Err(e.into()),
            }
        }
        record_timing(dir, "evaluate", started)?;
        let line = serde_json::to_string(&report).map_err(|e| CliError::Input(e.to_string()))?;
        Ok(line)
    })?;
    let reports: Vec<EvalReport> = reports
        .iter()
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::Input(e.to_string())))
        .collect::<Result<_, _>>()?;
    let aggregate = aggregate_targets(&reports)?;
    let by_group = aggregate_by_group(&reports);
    fs::write(s.run_dir.join("reports.csv"), reports_to_csv(&reports))?;
    fs::write(s.run_dir.join("aggregate.csv"), aggregate_to_csv(&aggregate))?;
    write_json(
        &s.run_dir.join("aggregate.json"),
        &serde_json::json!({"overall": aggregate, "by_relevance_group": by_group}),
    )?;
    let vina = aggregate
        .metrics
        .get("vina_avg")
        .map_or_else(|| "n/a".to_string(), |m| format!("{:.3}", m.avg));
    Ok(format!(
        "evaluated {} targets; mean vina_avg {vina}; reports in {}",
        reports.len(),
        s.run_dir.display()
    ))
}

/// Runs every stage in order; ingest and optimize only when configured.
pub fn cmd_pipeline(s: &Session) -> Result<String, CliError> {
    let mut out = Vec::new();
    if s.cfg.paths.raw_dir.is_some() {
        out.push(cmd_ingest(s)?);
    }
    out.push(cmd_index(s)?);
    out.push(cmd_retrieve(s)?);
    out.push(cmd_generate(s)?);
    if s.cfg.counter.is_some() {
        out.push(cmd_optimize(s)?);
    }
    out.push(cmd_evaluate(s)?);
    Ok(out.join("\n"))
}
