//! Stage orchestration: ingest, decompose, embed, evaluate, arena, report.
//!
//! Stages communicate through files under the output directory and the
//! vector index path, and each checks that its inputs exist rather than
//! recomputing them:
//!
//! ```text
//! out/corpus.json                 validated manifest with mined topics
//! out/decomposition/<id>.json     decomposed survey
//! <index path>                    vector index
//! out/verdicts/<id>.json          per-survey verdict log
//! out/report.json                 evaluation report
//! out/arena.json, out/arena.md    win rates
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{self, ArenaError, ArenaPair, ArenaResult};
use crate::config::{ConfigError, PipelineConfig, ProviderKind, EMBED_API_KEY_ENV, JUDGE_API_KEY_ENV};
use crate::corpus::{self, CorpusError, CorpusManifest, ManifestEntry, Role, SurveyRecord};
use crate::decompose::{render_outline, Decomposition};
use crate::embedkit::{embed_texts, Component, EmbedError, EmbeddingProvider, EmbeddingUnit, VectorIndex};
use crate::judgekit::{Judge, JudgeCache, JudgeError, JudgeProvider, TemplateRegistry};
use crate::metrics::{self, MetricError, MetricScore, MetricSet, SurveyVerdictLog};
use crate::providers::{HttpEmbedder, HttpJudge, MockEmbedder, MockJudge, MockScript};
use crate::report::{self, EvaluationReport, SurveyReport, VerifyOutcome};
use crate::simweight::{evaluate_configurations, similarity_factor, Sigmas, SimError, SimilarityFactor};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    /// A stage ran before the stage that produces its inputs.
    #[error("{0}")]
    Order(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error("verification found {0} mismatch(es)")]
    Verification(usize),
}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

fn judge_exit_code(e: &JudgeError) -> i32 {
    match e {
        JudgeError::ProviderUnavailable(_) | JudgeError::UnparseableVerdict { .. } | JudgeError::Cache(_) => {
            EXIT_PROVIDER
        }
        JudgeError::Precondition(_) | JudgeError::UnknownTemplate(_) | JudgeError::InvalidTemperature(_) => {
            EXIT_VALIDATION
        }
    }
}

impl PipelineError {
    /// Process exit code: 2 for bad input, 3 for provider failures, 4 for
    /// audit mismatches.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Judge(e) | PipelineError::Arena(ArenaError::Judge(e)) => judge_exit_code(e),
            PipelineError::Arena(ArenaError::NoDecisions) => EXIT_PROVIDER,
            PipelineError::Embed(
                EmbedError::ProviderUnavailable(_) | EmbedError::DimensionMismatch { .. } | EmbedError::ZeroVector,
            ) => EXIT_PROVIDER,
            PipelineError::Sim(SimError::Embed(EmbedError::ProviderUnavailable(_))) => EXIT_PROVIDER,
            PipelineError::Verification(_) => EXIT_VERIFY,
            _ => EXIT_VALIDATION,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), message: e.to_string() }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(
    path: &Path,
    missing: impl FnOnce() -> PipelineError,
) -> Result<T, PipelineError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing()),
        Err(e) => return Err(io_err(path, e)),
    };
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub corpus_id: String,
    pub surveys: usize,
    pub human: usize,
    pub generated: usize,
    pub pairs: usize,
    pub systems: Vec<String>,
    pub topics_mined: usize,
}

impl std::fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let plural = |n: usize, word: &str| format!("{n} {word}{}", if n == 1 { "" } else { "s" });
        write!(f, "{}, {}", plural(self.surveys, "survey"), plural(self.pairs, "pair"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedSummary {
    /// survey id → (outline, content, reference) unit counts.
    pub units: BTreeMap<String, [usize; 3]>,
    pub total: usize,
    pub digest: String,
}

/// The text embedded for each unit of a decomposed survey, as
/// `(component, 1-based index, text)`.
pub fn embedding_units(parts: &Decomposition) -> Vec<(Component, usize, String)> {
    let mut out = Vec::new();
    for (i, doc) in parts.outline_paths.iter().enumerate() {
        out.push((Component::Outline, i + 1, doc.rendered_text.clone()));
    }
    for s in parts.sections.iter().filter(|s| !s.body.is_empty()) {
        out.push((Component::Content, s.index, format!("{}\n{}", s.title(), s.body)));
    }
    for r in parts.references.iter().filter(|r| !r.text.trim().is_empty()) {
        out.push((Component::Reference, r.index, r.text.clone()));
    }
    out
}

/// σ for every facet of `generated` against `human`; undefined facets are
/// null and produce a warning.
pub fn sigmas_for(
    index: &VectorIndex,
    generated: &str,
    human: &str,
    top_n: impl Fn(Component) -> usize,
) -> Result<(Sigmas, Vec<SimilarityFactor>, Vec<String>), SimError> {
    let mut sigmas = Sigmas::default();
    let mut factors = Vec::new();
    let mut warnings = Vec::new();
    for c in Component::ALL {
        match similarity_factor(index, generated, human, c, top_n(c)) {
            Ok(f) => {
                sigmas.set(c, Some(f.sigma));
                factors.push(f);
            }
            Err(SimError::EmptySide { component, side }) => {
                warnings.push(format!("σ {component} undefined: no {component} units on the {side} side"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((sigmas, factors, warnings))
}

/// Metric values as measured at evaluation time, from the breakdown scores.
fn measured_metrics(log: &SurveyVerdictLog) -> Result<MetricSet, MetricError> {
    let mut set = MetricSet::default();
    set.insert(MetricScore::new(metrics::MetricId::Hierarchy, log.hierarchy.score)?);
    set.insert(MetricScore::new(metrics::MetricId::OutlineQuality, f64::from(log.outline_quality))?);
    if let Some(scores) = log.content_quality {
        for (id, s) in metrics::MetricId::CONTENT.into_iter().zip(scores) {
            set.insert(MetricScore::new(id, f64::from(s))?);
        }
    }
    if let Some(s) = log.faithfulness.as_ref().and_then(|f| f.score) {
        set.insert(s);
    }
    if let Some(q) = log.reference_quality {
        set.insert(MetricScore::new(metrics::MetricId::ReferenceQuality, f64::from(q))?);
    }
    if let Some(s) = log.supportiveness.as_ref().and_then(|f| f.score) {
        set.insert(s);
    }
    Ok(set)
}

pub fn build_judge_provider(config: &PipelineConfig, model: &str, script: &MockScript) -> Box<dyn JudgeProvider> {
    match config.judge.provider {
        ProviderKind::Mock => Box::new(MockJudge::new(model, script.clone())),
        ProviderKind::Http => Box::new(HttpJudge::new(
            config.judge.base_url.as_deref().unwrap_or_default(),
            model,
            JUDGE_API_KEY_ENV,
            Duration::from_secs(config.timeout_secs),
        )),
    }
}

pub fn build_embedder(config: &PipelineConfig, script: &MockScript) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
    Ok(match config.embedding.provider {
        ProviderKind::Mock => Box::new(MockEmbedder::from_script(script)?),
        ProviderKind::Http => Box::new(HttpEmbedder::new(
            config.embedding.base_url.as_deref().unwrap_or_default(),
            &config.embedding.model,
            EMBED_API_KEY_ENV,
            Duration::from_secs(config.timeout_secs),
        )),
    })
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub manifest: CorpusManifest,
    pub out_dir: PathBuf,
    pub offline: bool,
    script: MockScript,
    templates: TemplateRegistry,
    cache: JudgeCache,
    judge_provider: Box<dyn JudgeProvider>,
    embedder: Box<dyn EmbeddingProvider>,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    /// Wires providers from the config. The mock script (if any) takes the
    /// config seed, so one knob controls all randomness.
    pub fn new(config: PipelineConfig, manifest: CorpusManifest, offline: bool) -> Result<Self, PipelineError> {
        config.validate().map_err(|message| ConfigError::Invalid { path: "config".into(), message })?;
        let mut script = match &config.paths.mock_script {
            Some(p) if !p.exists() => return Err(ConfigError::MissingFile(p.clone()).into()),
            Some(p) => MockScript::load(p)
                .map_err(|message| ConfigError::Invalid { path: p.display().to_string(), message })?,
            None => MockScript::with_seed(config.seed),
        };
        script.seed = config.seed;
        let judge = build_judge_provider(&config, &config.judge.model, &script);
        let embedder = build_embedder(&config, &script)?;
        Self::with_providers(config, manifest, offline, script, judge, embedder)
    }

    pub fn with_providers(
        config: PipelineConfig,
        manifest: CorpusManifest,
        offline: bool,
        script: MockScript,
        judge_provider: Box<dyn JudgeProvider>,
        embedder: Box<dyn EmbeddingProvider>,
    ) -> Result<Self, PipelineError> {
        let templates = match &config.paths.templates {
            Some(p) => TemplateRegistry::with_overrides(p)?,
            None => TemplateRegistry::builtin(),
        };
        let cache = JudgeCache::open(&config.paths.cache)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.in_flight)
            .build()
            .map_err(|e| ConfigError::Invalid { path: "config".into(), message: e.to_string() })?;
        Ok(Self {
            out_dir: config.paths.out.clone(),
            config,
            manifest,
            offline,
            script,
            templates,
            cache,
            judge_provider,
            embedder,
            pool,
        })
    }

    pub fn templates(&self) -> &TemplateRegistry {
        &self.templates
    }

    pub fn cache(&self) -> &JudgeCache {
        &self.cache
    }

    pub fn judge(&self) -> Judge<'_> {
        self.judge_for(self.judge_provider.as_ref())
    }

    fn judge_for<'a>(&'a self, provider: &'a dyn JudgeProvider) -> Judge<'a> {
        let mut j = Judge::new(provider, &self.cache, &self.templates);
        j.temperature = self.config.temperature;
        j.offline = self.offline;
        j.context_budget = self.config.context_budget;
        j
    }

    fn top_n(&self, c: Component) -> usize {
        match c {
            Component::Outline => self.config.top_n.outline,
            Component::Content => self.config.top_n.content,
            Component::Reference => self.config.top_n.reference,
        }
    }

    pub fn decomposition_path(&self, id: &str) -> PathBuf {
        self.out_dir.join("decomposition").join(format!("{id}.json"))
    }

    pub fn verdict_path(&self, id: &str) -> PathBuf {
        self.out_dir.join("verdicts").join(format!("{id}.json"))
    }

    pub fn report_path(&self) -> PathBuf {
        self.out_dir.join("report.json")
    }

    pub fn index_path(&self) -> &Path {
        &self.config.paths.index
    }

    /// Topic per survey id. Human surveys with no topic get one mined from
    /// their title; generated surveys inherit their human survey's topic
    /// unless the manifest gives one.
    pub fn topics(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let judge = self.judge();
        let mut human = BTreeMap::new();
        for h in self.manifest.humans() {
            let topic = if h.topic.trim().is_empty() { corpus::mine_topic(&h.title, &judge)? } else { h.topic.clone() };
            human.insert(h.topic_key.clone(), topic);
        }
        let mut out = BTreeMap::new();
        for e in &self.manifest.entries {
            let topic = if e.topic.trim().is_empty() { human[&e.topic_key].clone() } else { e.topic.clone() };
            out.insert(e.id.clone(), topic);
        }
        Ok(out)
    }

    pub fn ingest(&self) -> Result<CorpusSummary, PipelineError> {
        let topics = self.topics()?;
        let mined = self.manifest.entries.iter().filter(|e| e.topic.trim().is_empty()).count();
        for e in &self.manifest.entries {
            let path = self.manifest.document_path(e);
            if !path.is_file() {
                return Err(CorpusError::MissingFile(path).into());
            }
        }
        let mut resolved = self.manifest.clone();
        for e in &mut resolved.entries {
            e.topic = topics[&e.id].clone();
        }
        write_text(&self.out_dir.join("corpus.json"), &resolved.to_json())?;
        Ok(CorpusSummary {
            corpus_id: self.manifest.corpus_id.clone(),
            surveys: self.manifest.entries.len(),
            human: self.manifest.humans().count(),
            generated: self.manifest.generated().count(),
            pairs: self.manifest.pairs().len(),
            systems: self.manifest.systems().iter().map(|s| s.to_string()).collect(),
            topics_mined: mined,
        })
    }

    /// Decomposes every survey and writes one JSON file per survey.
    pub fn decompose(&self) -> Result<Vec<SurveyRecord>, PipelineError> {
        let records = self.pool.install(|| {
            self.manifest
                .entries
                .par_iter()
                .map(|e| corpus::load_survey(&self.manifest, e))
                .collect::<Result<Vec<_>, _>>()
        })?;
        for r in &records {
            for w in &r.parts.warnings {
                log::warn!("{}: {w}", r.entry.id);
            }
            write_json(&self.decomposition_path(&r.entry.id), r)?;
        }
        Ok(records)
    }

    pub fn load_record(&self, entry: &ManifestEntry) -> Result<SurveyRecord, PipelineError> {
        let path = self.decomposition_path(&entry.id);
        read_json(&path, || {
            PipelineError::Order(format!(
                "decomposition for '{}' not found at {}; run `decompose` first",
                entry.id,
                path.display()
            ))
        })
    }

    fn load_records(&self) -> Result<BTreeMap<String, SurveyRecord>, PipelineError> {
        self.manifest.entries.iter().map(|e| Ok((e.id.clone(), self.load_record(e)?))).collect()
    }

    /// Structural audit of the stored decompositions, as `(survey, violation)`.
    pub fn audit_decompositions(&self) -> Result<Vec<(String, String)>, PipelineError> {
        let records = self.load_records()?;
        Ok(records
            .iter()
            .flat_map(|(id, r)| crate::decompose::audit(&r.parts).into_iter().map(move |v| (id.clone(), v)))
            .collect())
    }

    /// Reloads the saved index and checks it against the decompositions:
    /// unit counts per facet, unit texts, and unit-length vectors.
    pub fn audit_index(&self) -> Result<Vec<String>, PipelineError> {
        let records = self.load_records()?;
        let index = match self.load_index(&records) {
            Ok(i) => i,
            Err(PipelineError::Order(m)) => return Ok(vec![m]),
            Err(e) => return Err(e),
        };
        let mut violations = Vec::new();
        for (id, r) in &records {
            for (c, i, text) in embedding_units(&r.parts) {
                let key = crate::embedkit::UnitKey { survey_id: id.clone(), component: c, index: i };
                match index.get(&key) {
                    Some(u) if u.text == text => {
                        let norm = crate::embedkit::l2_norm(&u.vector);
                        if (norm - 1.0).abs() > 1e-9 {
                            violations.push(format!("{key}: vector norm {norm}"));
                        }
                    }
                    Some(_) => violations.push(format!("{key}: text differs from decomposition")),
                    None => violations.push(format!("{key}: missing from index")),
                }
            }
        }
        Ok(violations)
    }

    /// Embeds every unit of every decomposed survey and saves the index.
    pub fn embed(&self) -> Result<EmbedSummary, PipelineError> {
        let records = self.load_records()?;
        let embedder = self.embedder.as_ref();
        let per_survey = self.pool.install(|| {
            records
                .par_iter()
                .map(|(id, r)| {
                    let mut units = Vec::new();
                    for c in Component::ALL {
                        let items: Vec<(usize, String)> = embedding_units(&r.parts)
                            .into_iter()
                            .filter(|u| u.0 == c)
                            .map(|(_, i, t)| (i, t))
                            .collect();
                        if items.is_empty() {
                            continue;
                        }
                        let texts: Vec<String> = items.iter().map(|(_, t)| t.clone()).collect();
                        let vectors = embed_texts(&texts, embedder)?;
                        for ((index, text), vector) in items.into_iter().zip(vectors) {
                            units.push(EmbeddingUnit { survey_id: id.clone(), component: c, index, text, vector });
                        }
                    }
                    Ok(units)
                })
                .collect::<Result<Vec<_>, EmbedError>>()
        })?;
        let mut index = VectorIndex::new();
        for unit in per_survey.into_iter().flatten() {
            index.insert(unit)?;
        }
        index.save(self.index_path())?;
        let units = records.keys().map(|id| (id.clone(), Component::ALL.map(|c| index.count(id, c)))).collect();
        Ok(EmbedSummary { units, total: index.len(), digest: index.digest() })
    }

    /// Loads the index and checks it matches the current decompositions.
    pub fn load_index(&self, records: &BTreeMap<String, SurveyRecord>) -> Result<VectorIndex, PipelineError> {
        let path = self.index_path();
        if !path.exists() {
            return Err(PipelineError::Order(format!(
                "vector index not found at {}; run `embed` first",
                path.display()
            )));
        }
        let index = VectorIndex::load(path)?;
        for (id, r) in records {
            let units = embedding_units(&r.parts);
            for c in Component::ALL {
                let expected = units.iter().filter(|u| u.0 == c).count();
                if index.count(id, c) != expected {
                    return Err(PipelineError::Order(format!(
                        "vector index at {} is stale for '{id}' ({c}: {} units, expected {expected}); rerun `embed`",
                        path.display(),
                        index.count(id, c)
                    )));
                }
            }
        }
        Ok(index)
    }

    /// Scores every survey, writes verdict logs and the report.
    pub fn evaluate(&self) -> Result<EvaluationReport, PipelineError> {
        let mut records = self.load_records()?;
        let index = self.load_index(&records)?;
        let topics = self.topics()?;
        for (id, r) in records.iter_mut() {
            r.entry.topic = topics[id].clone();
        }
        let judge = self.judge();
        let logs = self.pool.install(|| {
            records
                .par_iter()
                .map(|(id, r)| Ok((id.clone(), metrics::evaluate_survey(r, &judge)?)))
                .collect::<Result<BTreeMap<_, _>, JudgeError>>()
        })?;
        for (id, log) in &logs {
            write_json(&self.verdict_path(id), log)?;
        }

        let measured: BTreeMap<&str, MetricSet> =
            logs.iter().map(|(id, l)| Ok((id.as_str(), measured_metrics(l)?))).collect::<Result<_, MetricError>>()?;
        let mut surveys = Vec::new();
        for (id, r) in &records {
            let entry = &r.entry;
            let set = &measured[id.as_str()];
            let mut warnings = logs[id].warnings.clone();
            let (human_id, sigmas, similarity, human_set) = match entry.role {
                Role::Human => (None, Sigmas::default(), Vec::new(), None),
                Role::Generated => {
                    let human = self.manifest.human_for(&entry.topic_key).expect("manifest validated pairing");
                    let (sigmas, factors, w) = sigmas_for(&index, id, &human.id, |c| self.top_n(c))?;
                    warnings.extend(w);
                    (Some(human.id.clone()), sigmas, factors, Some(&measured[human.id.as_str()]))
                }
            };
            surveys.push(SurveyReport {
                survey_id: id.clone(),
                system: entry.system().to_string(),
                role: entry.role,
                topic: entry.topic.clone(),
                human_id,
                metrics: set.iter().cloned().collect(),
                similarity,
                configurations: evaluate_configurations(set, human_set, &sigmas),
                sigmas,
                warnings,
            });
        }
        let report = EvaluationReport::new(
            &self.manifest.corpus_id,
            self.config.digest(),
            self.cache.content_digest(),
            index.digest(),
            surveys,
        );
        write_text(&self.report_path(), &report.to_json())?;
        Ok(report)
    }

    /// Metrics and σ of a human survey scored against itself.
    pub fn self_evaluate(&self, human_id: &str) -> Result<(MetricSet, Sigmas), PipelineError> {
        let entry = self
            .manifest
            .entry(human_id)
            .ok_or_else(|| PipelineError::Order(format!("unknown survey '{human_id}'")))?;
        let mut record = self.load_record(entry)?;
        let index = self.load_index(&BTreeMap::from([(human_id.to_string(), record.clone())]))?;
        record.entry.topic = self.topics()?[human_id].clone();
        let log = metrics::evaluate_survey(&record, &self.judge())?;
        let (sigmas, _, _) = sigmas_for(&index, human_id, human_id, |c| self.top_n(c))?;
        Ok((measured_metrics(&log)?, sigmas))
    }

    /// Recomputes the stored report from verdict logs and the index.
    pub fn verify(&self) -> Result<VerifyOutcome, PipelineError> {
        let path = self.report_path();
        let text = fs::read_to_string(&path).map_err(|_| {
            PipelineError::Order(format!("report not found at {}; run `evaluate` first", path.display()))
        })?;
        let report = EvaluationReport::from_json(&text).map_err(|e| io_err(&path, e))?;
        let mut logs = BTreeMap::new();
        for s in &report.surveys {
            let p = self.verdict_path(&s.survey_id);
            if let Ok(log) = read_json::<SurveyVerdictLog>(&p, || PipelineError::Order(String::new())) {
                logs.insert(s.survey_id.clone(), log);
            }
        }
        let index_path = self.index_path();
        if !index_path.exists() {
            return Err(PipelineError::Order(format!("vector index not found at {}", index_path.display())));
        }
        let index = VectorIndex::load(index_path)?;
        Ok(report::verify_report(&report, &logs, &index, |c| self.top_n(c), &self.config.digest()))
    }

    /// Win rates of each system against the human surveys, per facet.
    pub fn arena(&self) -> Result<Vec<ArenaResult>, PipelineError> {
        let records = self.load_records()?;
        let topics = self.topics()?;
        let providers: Vec<(String, Box<dyn JudgeProvider>)> = self
            .config
            .arena
            .judges
            .iter()
            .map(|m| (m.clone(), build_judge_provider(&self.config, m, &self.script)))
            .collect();
        let judges: Vec<(String, Judge<'_>)> =
            providers.iter().map(|(m, p)| (m.clone(), self.judge_for(p.as_ref()))).collect();

        let render = |r: &SurveyRecord, c: Component| -> Option<String> {
            match c {
                Component::Outline => Some(render_outline(&r.parts.outline)),
                Component::Content => r.has_content().then(|| metrics::render_content(r)),
                Component::Reference => {
                    r.has_references().then(|| metrics::reference_texts(&r.parts.references).join("\n"))
                }
            }
        };
        let mut results = Vec::new();
        for (system, pairs) in self.manifest.pairs_by_system() {
            for c in Component::ALL {
                let arena_pairs: Vec<ArenaPair> = pairs
                    .iter()
                    .filter_map(|p| {
                        let g = &records[&p.generated.id];
                        let h = &records[&p.human.id];
                        Some(ArenaPair {
                            generated_id: p.generated.id.clone(),
                            human_id: p.human.id.clone(),
                            topic: topics[&p.human.id].clone(),
                            generated: render(g, c)?,
                            human: render(h, c)?,
                        })
                    })
                    .collect();
                if arena_pairs.is_empty() {
                    log::warn!("arena: no {c} pairs for {system}");
                    continue;
                }
                results.push(self.pool.install(|| arena::run_arena(system, c, &arena_pairs, &judges))?);
            }
        }
        write_json(&self.out_dir.join("arena.json"), &results)?;
        write_text(&self.out_dir.join("arena.md"), &arena::render_markdown(&results))?;
        Ok(results)
    }

    pub fn criteria(&self, dimension: &str) -> Result<Vec<String>, PipelineError> {
        Ok(self.judge().rubric_criteria(dimension)?)
    }
}

/// Reads a stored report for rendering.
pub fn load_report(path: &Path) -> Result<EvaluationReport, PipelineError> {
    read_json(path, || PipelineError::Order(format!("report not found at {}; run `evaluate` first", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Order("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::Corpus(CorpusError::MissingFile("a".into())).exit_code(), 2);
        assert_eq!(PipelineError::Judge(JudgeError::ProviderUnavailable("x".into())).exit_code(), 3);
        assert_eq!(PipelineError::Embed(EmbedError::ProviderUnavailable("x".into())).exit_code(), 3);
        assert_eq!(PipelineError::Verification(1).exit_code(), 4);
    }

    #[test]
    fn summary_wording() {
        let s = CorpusSummary {
            corpus_id: "c".into(),
            surveys: 2,
            human: 1,
            generated: 1,
            pairs: 1,
            systems: vec!["s".into()],
            topics_mined: 0,
        };
        assert_eq!(s.to_string(), "2 surveys, 1 pair");
    }
}
