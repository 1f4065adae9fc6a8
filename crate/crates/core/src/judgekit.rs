//! LLM-judge contract: task payloads, versioned prompt templates, verdict
//! parsing and a content-addressed response cache that makes runs replayable.
//!
//! Judges answer inside a fenced block, one token per line:
//!
//! ````text
//! ```verdict
//! yes
//! no
//! ```
//! ````
//!
//! Anything outside the first fenced block is ignored.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedkit::Component;

/// Number of extra attempts after an unparseable verdict.
pub const MAX_REASKS: u32 = 2;
/// Number of extra attempts after a pairwise tie before falling back to `A`.
pub const MAX_TIE_REASKS: u32 = 1;
pub const DEFAULT_TEMPERATURE: f64 = 0.5;
/// Character budget for survey text placed in a single prompt.
pub const DEFAULT_CONTEXT_BUDGET: usize = 400_000;

/// Content quality dimensions, in reporting order.
pub const CONTENT_DIMENSIONS: [&str; 5] = ["coverage", "structure", "relevance", "language", "criticalness"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgeError {
    #[error("judge provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("unparseable {kind} verdict: {detail}")]
    UnparseableVerdict { kind: TaskKind, detail: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown prompt template '{0}'")]
    UnknownTemplate(String),
    #[error("temperature {0} outside [0, 2]")]
    InvalidTemperature(f64),
    #[error("judge cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ChildrenCoherence,
    OutlineQuality,
    ContentQuality,
    ReferenceQuality,
    CitationSupport,
    ReferenceRelevance,
    Pairwise,
    TopicLabel,
    RubricCriteria,
}

impl TaskKind {
    pub const ALL: [TaskKind; 9] = [
        TaskKind::ChildrenCoherence,
        TaskKind::OutlineQuality,
        TaskKind::ContentQuality,
        TaskKind::ReferenceQuality,
        TaskKind::CitationSupport,
        TaskKind::ReferenceRelevance,
        TaskKind::Pairwise,
        TaskKind::TopicLabel,
        TaskKind::RubricCriteria,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ChildrenCoherence => "children_coherence",
            TaskKind::OutlineQuality => "outline_quality",
            TaskKind::ContentQuality => "content_quality",
            TaskKind::ReferenceQuality => "reference_quality",
            TaskKind::CitationSupport => "citation_support",
            TaskKind::ReferenceRelevance => "reference_relevance",
            TaskKind::Pairwise => "pairwise",
            TaskKind::TopicLabel => "topic_label",
            TaskKind::RubricCriteria => "rubric_criteria",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    ChildrenCoherence { topic: String, parent_path: Vec<String>, children: Vec<String> },
    OutlineQuality { topic: String, outline: String },
    ContentQuality { topic: String, content: String },
    ReferenceQuality { topic: String, references: Vec<String> },
    CitationSupport { sentence: String, references: Vec<String> },
    ReferenceRelevance { topic: String, reference: String, position: usize },
    Pairwise { dimension: Component, topic: String, candidate_a: String, candidate_b: String },
    TopicLabel { title: String },
    RubricCriteria { dimension: String },
}

fn numbered(items: &[String]) -> String {
    items.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n")
}

impl Payload {
    pub fn kind(&self) -> TaskKind {
        match self {
            Payload::ChildrenCoherence { .. } => TaskKind::ChildrenCoherence,
            Payload::OutlineQuality { .. } => TaskKind::OutlineQuality,
            Payload::ContentQuality { .. } => TaskKind::ContentQuality,
            Payload::ReferenceQuality { .. } => TaskKind::ReferenceQuality,
            Payload::CitationSupport { .. } => TaskKind::CitationSupport,
            Payload::ReferenceRelevance { .. } => TaskKind::ReferenceRelevance,
            Payload::Pairwise { .. } => TaskKind::Pairwise,
            Payload::TopicLabel { .. } => TaskKind::TopicLabel,
            Payload::RubricCriteria { .. } => TaskKind::RubricCriteria,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("payload serializes").as_bytes())
    }

    /// Number of judged items the verdict must contain, for list verdicts.
    pub fn item_count(&self) -> usize {
        match self {
            Payload::ChildrenCoherence { children, .. } => children.len(),
            Payload::CitationSupport { references, .. } => references.len(),
            Payload::ContentQuality { .. } => CONTENT_DIMENSIONS.len(),
            _ => 1,
        }
    }

    /// Template placeholder values.
    fn fields(&self) -> Vec<(&'static str, String)> {
        match self {
            Payload::ChildrenCoherence { topic, parent_path, children } => vec![
                ("topic", topic.clone()),
                (
                    "parent",
                    if parent_path.is_empty() { format!("(survey root) {topic}") } else { parent_path.join(" > ") },
                ),
                ("children", numbered(children)),
                ("count", children.len().to_string()),
            ],
            Payload::OutlineQuality { topic, outline } => {
                vec![("topic", topic.clone()), ("outline", outline.clone())]
            }
            Payload::ContentQuality { topic, content } => {
                vec![("topic", topic.clone()), ("content", content.clone())]
            }
            Payload::ReferenceQuality { topic, references } => {
                vec![("topic", topic.clone()), ("references", numbered(references))]
            }
            Payload::CitationSupport { sentence, references } => vec![
                ("sentence", sentence.clone()),
                ("references", numbered(references)),
                ("count", references.len().to_string()),
            ],
            Payload::ReferenceRelevance { topic, reference, position } => {
                vec![("topic", topic.clone()), ("reference", reference.clone()), ("position", position.to_string())]
            }
            Payload::Pairwise { dimension, topic, candidate_a, candidate_b } => vec![
                ("dimension", dimension.to_string()),
                ("topic", topic.clone()),
                ("candidate_a", candidate_a.clone()),
                ("candidate_b", candidate_b.clone()),
            ],
            Payload::TopicLabel { title } => vec![("title", title.clone())],
            Payload::RubricCriteria { dimension } => vec![("dimension", dimension.clone())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeTask {
    pub payload: Payload,
    pub template_id: String,
    pub temperature: f64,
}

impl JudgeTask {
    pub fn kind(&self) -> TaskKind {
        self.payload.kind()
    }
}

// ---------------------------------------------------------------------------
// Templates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub kind: TaskKind,
    pub text: String,
}

const VERDICT_FORMAT: &str = "Answer with a fenced block tagged `verdict` containing exactly the requested tokens, one per line, and nothing else inside the block.";

fn builtin_text(kind: TaskKind) -> String {
    let body = match kind {
        TaskKind::ChildrenCoherence => "You are reviewing the outline of an academic survey on \"{topic}\".\n\
Parent section: {parent}\n\
Child sections:\n{children}\n\n\
For each child section, decide whether it logically follows from its parent section: it belongs under the parent, elaborates it, and does not drift to an unrelated subject.\n\
Give {count} answers, `yes` or `no`, in the order of the children.",
        TaskKind::OutlineQuality => "You are an expert reviewer of academic surveys on \"{topic}\".\n\
Assess the overall quality of the following survey outline: topical coverage, logical ordering of sections, balance of depth, and absence of redundancy.\n\n\
Outline:\n{outline}\n\n\
Score 1 (poor) to 5 (excellent). Give a single integer.",
        TaskKind::ContentQuality => "You are an expert reviewer of academic surveys on \"{topic}\".\n\
Rate the survey content below on five dimensions, each from 1 (poor) to 5 (excellent):\n\
1. Coverage: how thoroughly the core topics of the field are addressed.\n\
2. Structure: the logical organization of information.\n\
3. Relevance: the pertinence of the content to the survey topic.\n\
4. Language: the clarity and professionalism of the writing.\n\
5. Criticalness: the degree of critical analysis and insight provided.\n\n\
Content:\n{content}\n\n\
Give five integers in the order Coverage, Structure, Relevance, Language, Criticalness.",
        TaskKind::ReferenceQuality => "You are an expert reviewer of academic surveys on \"{topic}\".\n\
Assess the bibliography below for relevance to the topic, diversity of sources, and adequacy of coverage.\n\n\
References:\n{references}\n\n\
Score 1 (poor) to 5 (excellent). Give a single integer.",
        TaskKind::CitationSupport => "A survey makes the following statement:\n\"{sentence}\"\n\n\
It cites these references:\n{references}\n\n\
For each reference, decide whether it supports the statement.\n\
Give {count} answers, `yes` or `no`, in the order of the references.",
        TaskKind::ReferenceRelevance => "A survey on \"{topic}\" cites the following reference (entry {position} of its bibliography):\n{reference}\n\n\
Is this reference relevant to the survey topic? Answer `yes` or `no`.",
        TaskKind::Pairwise => "Two surveys on \"{topic}\" are compared on their {dimension}.\n\n\
Candidate A:\n{candidate_a}\n\n\
Candidate B:\n{candidate_b}\n\n\
Which candidate has the better {dimension}? Ties are not allowed. Answer `A` or `B`.",
        TaskKind::TopicLabel => "The following is the title of an academic survey:\n\"{title}\"\n\n\
Give a concise, high-level label for the research topic it covers, as a single line.",
        TaskKind::RubricCriteria => "List the criteria an expert reviewer should apply when judging the {dimension} of an academic survey.\n\
Give one short criterion per line.",
    };
    format!("{body}\n\n{VERDICT_FORMAT}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
    defaults: BTreeMap<TaskKind, String>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let mut reg = TemplateRegistry { templates: BTreeMap::new(), defaults: BTreeMap::new() };
        for kind in TaskKind::ALL {
            reg.add(PromptTemplate { id: format!("{kind}.v1"), kind, text: builtin_text(kind) }, true);
        }
        reg
    }

    /// Registers a template, optionally making it the default for its kind.
    pub fn add(&mut self, template: PromptTemplate, make_default: bool) {
        if make_default {
            self.defaults.insert(template.kind, template.id.clone());
        }
        self.templates.insert(template.id.clone(), template);
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.get(id)
    }

    pub fn default_id(&self, kind: TaskKind) -> &str {
        self.defaults.get(&kind).map(String::as_str).expect("every kind has a default template")
    }

    pub fn templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    /// Builtins overlaid with the templates in a JSON file, which become the
    /// defaults for their kinds.
    pub fn with_overrides(path: &Path) -> Result<Self, JudgeError> {
        let text =
            fs::read_to_string(path).map_err(|e| JudgeError::UnknownTemplate(format!("{}: {e}", path.display())))?;
        let extra: Vec<PromptTemplate> =
            serde_json::from_str(&text).map_err(|e| JudgeError::UnknownTemplate(format!("{}: {e}", path.display())))?;
        let mut reg = Self::builtin();
        for t in extra {
            reg.add(t, true);
        }
        Ok(reg)
    }

    pub fn render(&self, task: &JudgeTask) -> Result<String, JudgeError> {
        let template =
            self.get(&task.template_id).ok_or_else(|| JudgeError::UnknownTemplate(task.template_id.clone()))?;
        if template.kind != task.kind() {
            return Err(JudgeError::UnknownTemplate(format!(
                "{} is a {} template, task is {}",
                template.id,
                template.kind,
                task.kind()
            )));
        }
        Ok(fill_placeholders(&template.text, &task.payload.fields()))
    }
}

/// Single-pass `{name}` substitution; unknown names are left untouched and
/// substituted values are never rescanned.
fn fill_placeholders(template: &str, fields: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match fields.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

// ---------------------------------------------------------------------------
// Verdicts

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum VerdictValue {
    Booleans(Vec<bool>),
    Score(u8),
    Scores([u8; 5]),
    Boolean(bool),
    Winner(Side),
    Label(String),
    Lines(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    pub raw_text: String,
    /// Set when the value is the deterministic pairwise tie fallback.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum ParseFailure {
    Tie,
    Invalid(String),
}

/// Tokens of the first fenced block, with list markers and `label:` prefixes
/// stripped.
pub fn verdict_tokens(raw: &str) -> Option<Vec<String>> {
    let mut lines = raw.lines();
    lines.find(|l| l.trim_start().starts_with("```"))?;
    let mut tokens = Vec::new();
    for line in lines {
        let t = line.trim();
        if t.starts_with("```") {
            return Some(tokens);
        }
        if t.is_empty() {
            continue;
        }
        let t = t.trim_start_matches(['-', '*', ' ']);
        let t = strip_enumeration(t);
        let t = match t.split_once(':') {
            Some((label, v))
                if !label.trim().contains(char::is_whitespace)
                    && !v.trim().is_empty()
                    && !v.trim().contains(char::is_whitespace) =>
            {
                v.trim()
            }
            _ => t,
        };
        tokens.push(t.to_string());
    }
    None
}

fn strip_enumeration(t: &str) -> &str {
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && t.len() > digits + 1 {
        let rest = &t[digits..];
        if (rest.starts_with(". ") || rest.starts_with(") ")) && !rest[2..].trim().is_empty() {
            return rest[2..].trim_start();
        }
    }
    t
}

fn parse_bool(token: &str) -> Option<bool> {
    match token.to_ascii_lowercase().trim_end_matches('.') {
        "yes" | "true" | "y" => Some(true),
        "no" | "false" | "n" => Some(false),
        _ => None,
    }
}

fn parse_score(token: &str) -> Result<u8, String> {
    let t = token.trim_end_matches('.');
    let t = t.split('/').next().unwrap_or(t).trim();
    let v: u8 = t.parse().map_err(|_| format!("'{token}' is not an integer score"))?;
    if (1..=5).contains(&v) {
        Ok(v)
    } else {
        Err(format!("score {v} outside 1..=5"))
    }
}

fn parse_value(kind: TaskKind, expected_items: usize, raw: &str) -> Result<VerdictValue, ParseFailure> {
    let invalid = |s: String| ParseFailure::Invalid(s);
    let tokens = verdict_tokens(raw).ok_or_else(|| invalid("no fenced verdict block".into()))?;
    let single = |tokens: &[String]| -> Result<String, ParseFailure> {
        match tokens {
            [t] => Ok(t.clone()),
            _ => Err(ParseFailure::Invalid(format!("expected 1 token, got {}", tokens.len()))),
        }
    };
    match kind {
        TaskKind::ChildrenCoherence | TaskKind::CitationSupport => {
            if tokens.len() != expected_items {
                return Err(invalid(format!("expected {expected_items} answers, got {}", tokens.len())));
            }
            tokens
                .iter()
                .map(|t| parse_bool(t).ok_or_else(|| invalid(format!("'{t}' is not yes/no"))))
                .collect::<Result<_, _>>()
                .map(VerdictValue::Booleans)
        }
        TaskKind::OutlineQuality | TaskKind::ReferenceQuality => {
            parse_score(&single(&tokens)?).map(VerdictValue::Score).map_err(invalid)
        }
        TaskKind::ContentQuality => {
            if tokens.len() != CONTENT_DIMENSIONS.len() {
                return Err(invalid(format!("expected 5 scores, got {}", tokens.len())));
            }
            let mut scores = [0u8; 5];
            for (slot, t) in scores.iter_mut().zip(&tokens) {
                *slot = parse_score(t).map_err(invalid)?;
            }
            Ok(VerdictValue::Scores(scores))
        }
        TaskKind::ReferenceRelevance => {
            let t = single(&tokens)?;
            parse_bool(&t).map(VerdictValue::Boolean).ok_or_else(|| invalid(format!("'{t}' is not yes/no")))
        }
        TaskKind::Pairwise => {
            let t = single(&tokens)?;
            match t.to_ascii_uppercase().trim_end_matches('.') {
                "A" => Ok(VerdictValue::Winner(Side::A)),
                "B" => Ok(VerdictValue::Winner(Side::B)),
                "TIE" | "EQUAL" | "NONE" | "BOTH" => Err(ParseFailure::Tie),
                _ => Err(invalid(format!("'{t}' is not A or B"))),
            }
        }
        TaskKind::TopicLabel => {
            let t = single(&tokens)?;
            Ok(VerdictValue::Label(t))
        }
        TaskKind::RubricCriteria => {
            if tokens.is_empty() {
                Err(invalid("no criteria".into()))
            } else {
                Ok(VerdictValue::Lines(tokens))
            }
        }
    }
}

/// Parses a raw judge response for a task; pure and re-runnable on cached
/// responses.
pub fn parse_verdict(payload: &Payload, raw: &str) -> Result<VerdictValue, JudgeError> {
    parse_value(payload.kind(), payload.item_count(), raw).map_err(|f| JudgeError::UnparseableVerdict {
        kind: payload.kind(),
        detail: match f {
            ParseFailure::Tie => "tie".into(),
            ParseFailure::Invalid(s) => s,
        },
    })
}

/// Wraps verdict tokens in the fenced response format.
pub fn format_verdict_block(tokens: &[String]) -> String {
    let mut out = String::from("```verdict\n");
    for t in tokens {
        out.push_str(t);
        out.push('\n');
    }
    out.push_str("```");
    out
}

// ---------------------------------------------------------------------------
// Provider contract and cache

pub struct JudgeRequest<'a> {
    pub task: &'a JudgeTask,
    pub prompt: &'a str,
    /// 0 for the first ask, incremented on every re-ask.
    pub attempt: u32,
}

pub trait JudgeProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, JudgeError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub model_id: String,
    pub template_id: String,
    pub response: String,
    pub timestamp: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn cache_digest(model_id: &str, template_id: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    for part in [model_id, template_id, prompt] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Append-only response cache, optionally backed by a JSON-lines file.
#[derive(Debug, Default)]
pub struct JudgeCache {
    entries: RwLock<HashMap<String, CacheEntry>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl JudgeCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a cache file and loads its entries. When a
    /// digest appears twice the first line wins.
    pub fn open(path: &Path) -> Result<Self, JudgeError> {
        let err = |e: std::io::Error| JudgeError::Cache(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(err)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line)
                    .map_err(|e| JudgeError::Cache(format!("{} line {}: {e}", path.display(), i + 1)))?;
                entries.entry(entry.digest.clone()).or_insert(entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        Ok(Self { entries: RwLock::new(entries), file: Some(Mutex::new(file)), path: Some(path.to_path_buf()) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(digest).map(|e| e.response.clone())
    }

    /// Stores a response unless the digest is already present; returns the
    /// response now associated with the digest.
    pub fn insert(&self, entry: CacheEntry) -> Result<String, JudgeError> {
        let mut entries = self.entries.write().expect("cache lock");
        if let Some(existing) = entries.get(&entry.digest) {
            return Ok(existing.response.clone());
        }
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
            line.push('\n');
            let mut f = file.lock().expect("cache file lock");
            f.write_all(line.as_bytes()).map_err(|e| JudgeError::Cache(e.to_string()))?;
        }
        let response = entry.response.clone();
        entries.insert(entry.digest.clone(), entry);
        Ok(response)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Order-independent digest of the cached (digest, response) pairs.
    pub fn content_digest(&self) -> String {
        let entries = self.entries.read().expect("cache lock");
        let mut keys: Vec<&String> = entries.keys().collect();
        keys.sort();
        let mut h = Sha256::new();
        for k in keys {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(entries[k].response.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

/// Keeps the head (60% of budget) and tail (20% of budget) of over-long text
/// around an elision marker.
pub fn truncate_for_budget(text: &str, budget: usize) -> Cow<'_, str> {
    let total = text.chars().count();
    if total <= budget {
        return Cow::Borrowed(text);
    }
    let head_chars = budget * 3 / 5;
    let tail_chars = budget / 5;
    let head_end = text.char_indices().nth(head_chars).map_or(text.len(), |(i, _)| i);
    let tail_start = text.char_indices().nth(total - tail_chars).map_or(text.len(), |(i, _)| i);
    let elided = total - head_chars - tail_chars;
    Cow::Owned(format!("{}\n[... {elided} characters elided ...]\n{}", &text[..head_end], &text[tail_start..]))
}

// ---------------------------------------------------------------------------
// Judge

/// A provider bound to a cache and prompt settings.
#[derive(Clone, Copy)]
pub struct Judge<'a> {
    pub provider: &'a dyn JudgeProvider,
    pub cache: &'a JudgeCache,
    pub templates: &'a TemplateRegistry,
    pub temperature: f64,
    /// Cache-only mode: a miss fails instead of calling the provider.
    pub offline: bool,
    pub context_budget: usize,
}

impl<'a> Judge<'a> {
    pub fn new(provider: &'a dyn JudgeProvider, cache: &'a JudgeCache, templates: &'a TemplateRegistry) -> Self {
        Self {
            provider,
            cache,
            templates,
            temperature: DEFAULT_TEMPERATURE,
            offline: false,
            context_budget: DEFAULT_CONTEXT_BUDGET,
        }
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    pub fn task(&self, payload: Payload) -> JudgeTask {
        let template_id = self.templates.default_id(payload.kind()).to_string();
        JudgeTask { payload, template_id, temperature: self.temperature }
    }

    fn fetch(&self, task: &JudgeTask, prompt: &str, attempt: u32) -> Result<String, JudgeError> {
        let model_id = self.provider.model_id();
        let digest = cache_digest(model_id, &task.template_id, prompt);
        if let Some(hit) = self.cache.get(&digest) {
            return Ok(hit);
        }
        if self.offline {
            return Err(JudgeError::ProviderUnavailable(format!("offline mode: cache miss for {digest}")));
        }
        let response = self.provider.complete(&JudgeRequest { task, prompt, attempt })?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        self.cache.insert(CacheEntry {
            digest,
            model_id: model_id.to_string(),
            template_id: task.template_id.clone(),
            response,
            timestamp,
        })
    }

    /// Renders, fetches (cache first) and parses a task, re-asking on
    /// unparseable answers.
    pub fn cached_call(&self, task: &JudgeTask) -> Result<Verdict, JudgeError> {
        if !(0.0..=2.0).contains(&task.temperature) {
            return Err(JudgeError::InvalidTemperature(task.temperature));
        }
        let base = self.templates.render(task)?;
        let kind = task.kind();
        let items = task.payload.item_count();
        let (mut reasks, mut ties) = (0, 0);
        let mut last = String::new();
        for attempt in 0.. {
            let prompt = if attempt == 0 {
                Cow::Borrowed(base.as_str())
            } else {
                Cow::Owned(format!(
                    "{base}\n\nYour previous answer (attempt {attempt}) could not be used: {last}. {VERDICT_FORMAT}"
                ))
            };
            let raw = self.fetch(task, &prompt, attempt)?;
            match parse_value(kind, items, &raw) {
                Ok(value) => return Ok(Verdict { value, raw_text: raw, fallback: false }),
                Err(ParseFailure::Tie) => {
                    if ties >= MAX_TIE_REASKS {
                        log::warn!("pairwise judge {} kept answering tie; falling back to A", self.model_id());
                        return Ok(Verdict { value: VerdictValue::Winner(Side::A), raw_text: raw, fallback: true });
                    }
                    ties += 1;
                    last = "ties are not allowed".into();
                }
                Err(ParseFailure::Invalid(detail)) => {
                    if reasks >= MAX_REASKS {
                        return Err(JudgeError::UnparseableVerdict { kind, detail });
                    }
                    reasks += 1;
                    last = detail;
                }
            }
        }
        unreachable!("attempt loop only exits by returning")
    }

    fn call(&self, payload: Payload) -> Result<VerdictValue, JudgeError> {
        self.cached_call(&self.task(payload)).map(|v| v.value)
    }

    pub fn children_coherence(
        &self,
        topic: &str,
        parent_path: &[String],
        children: &[String],
    ) -> Result<Vec<bool>, JudgeError> {
        if children.is_empty() {
            return Err(JudgeError::Precondition("children_coherence needs at least one child".into()));
        }
        match self.call(Payload::ChildrenCoherence {
            topic: topic.into(),
            parent_path: parent_path.to_vec(),
            children: children.to_vec(),
        })? {
            VerdictValue::Booleans(b) => Ok(b),
            other => Err(unexpected(TaskKind::ChildrenCoherence, &other)),
        }
    }

    pub fn outline_quality(&self, topic: &str, rendered_outline: &str) -> Result<u8, JudgeError> {
        if rendered_outline.trim().is_empty() {
            return Err(JudgeError::Precondition("outline is empty".into()));
        }
        let outline = truncate_for_budget(rendered_outline, self.context_budget).into_owned();
        match self.call(Payload::OutlineQuality { topic: topic.into(), outline })? {
            VerdictValue::Score(s) => Ok(s),
            other => Err(unexpected(TaskKind::OutlineQuality, &other)),
        }
    }

    /// Scores in [`CONTENT_DIMENSIONS`] order.
    pub fn content_quality(&self, topic: &str, content: &str) -> Result<[u8; 5], JudgeError> {
        if content.trim().is_empty() {
            return Err(JudgeError::Precondition("content is empty".into()));
        }
        let content = truncate_for_budget(content, self.context_budget).into_owned();
        match self.call(Payload::ContentQuality { topic: topic.into(), content })? {
            VerdictValue::Scores(s) => Ok(s),
            other => Err(unexpected(TaskKind::ContentQuality, &other)),
        }
    }

    pub fn reference_quality(&self, topic: &str, references: &[String]) -> Result<u8, JudgeError> {
        if references.is_empty() {
            return Err(JudgeError::Precondition("reference list is empty".into()));
        }
        match self.call(Payload::ReferenceQuality { topic: topic.into(), references: references.to_vec() })? {
            VerdictValue::Score(s) => Ok(s),
            other => Err(unexpected(TaskKind::ReferenceQuality, &other)),
        }
    }

    /// One support judgment per cited reference.
    pub fn citation_support(&self, sentence: &str, cited_reference_texts: &[String]) -> Result<Vec<bool>, JudgeError> {
        if cited_reference_texts.is_empty() {
            return Err(JudgeError::Precondition("sentence cites no references".into()));
        }
        match self
            .call(Payload::CitationSupport { sentence: sentence.into(), references: cited_reference_texts.to_vec() })?
        {
            VerdictValue::Booleans(b) => Ok(b),
            other => Err(unexpected(TaskKind::CitationSupport, &other)),
        }
    }

    pub fn reference_relevance(&self, topic: &str, reference_text: &str, position: usize) -> Result<bool, JudgeError> {
        match self.call(Payload::ReferenceRelevance {
            topic: topic.into(),
            reference: reference_text.into(),
            position,
        })? {
            VerdictValue::Boolean(b) => Ok(b),
            other => Err(unexpected(TaskKind::ReferenceRelevance, &other)),
        }
    }

    pub fn pairwise(
        &self,
        dimension: Component,
        topic: &str,
        candidate_a: &str,
        candidate_b: &str,
    ) -> Result<Side, JudgeError> {
        let candidate_a = truncate_for_budget(candidate_a, self.context_budget / 2).into_owned();
        let candidate_b = truncate_for_budget(candidate_b, self.context_budget / 2).into_owned();
        match self.call(Payload::Pairwise { dimension, topic: topic.into(), candidate_a, candidate_b })? {
            VerdictValue::Winner(w) => Ok(w),
            other => Err(unexpected(TaskKind::Pairwise, &other)),
        }
    }

    pub fn topic_label(&self, title: &str) -> Result<String, JudgeError> {
        if title.trim().is_empty() {
            return Err(JudgeError::Precondition("title is empty".into()));
        }
        match self.call(Payload::TopicLabel { title: title.into() })? {
            VerdictValue::Label(l) => Ok(l),
            other => Err(unexpected(TaskKind::TopicLabel, &other)),
        }
    }

    pub fn rubric_criteria(&self, dimension: &str) -> Result<Vec<String>, JudgeError> {
        match self.call(Payload::RubricCriteria { dimension: dimension.into() })? {
            VerdictValue::Lines(l) => Ok(l),
            other => Err(unexpected(TaskKind::RubricCriteria, &other)),
        }
    }
}

fn unexpected(kind: TaskKind, value: &VerdictValue) -> JudgeError {
    JudgeError::UnparseableVerdict { kind, detail: format!("unexpected verdict {value:?}") }
}
