//! Pipeline configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//! temperature = 0.5
//! in_flight = 4
//!
//! [top_n]
//! outline = 5
//! content = 5
//! reference = 20
//!
//! [judge]
//! provider = "mock"          # or "http"
//! model = "mock-judge"
//! base_url = "https://api.example.com/v1"
//!
//! [embedding]
//! provider = "mock"
//! model = "mock-embedding"
//!
//! [paths]
//! cache = "cache/judge.jsonl"
//! index = "index/vectors.jsonl"
//! out = "out"
//! mock_script = "script.json"
//!
//! [arena]
//! judges = ["judge-a", "judge-b", "judge-c"]
//! ```
//!
//! Relative paths resolve against the config file's directory. API keys are
//! read from `JUDGE_API_KEY` and `EMBED_API_KEY`, never from the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::judgekit::{DEFAULT_CONTEXT_BUDGET, DEFAULT_TEMPERATURE};
use crate::simweight::{DEFAULT_TOP_N_CONTENT, DEFAULT_TOP_N_OUTLINE, DEFAULT_TOP_N_REFERENCE};

pub const JUDGE_API_KEY_ENV: &str = "JUDGE_API_KEY";
pub const EMBED_API_KEY_ENV: &str = "EMBED_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("invalid config {path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub provider: ProviderKind,
    pub model: String,
    #[serde(default)]
    pub base_url: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopN {
    #[serde(default = "default_outline")]
    pub outline: usize,
    #[serde(default = "default_content")]
    pub content: usize,
    #[serde(default = "default_reference")]
    pub reference: usize,
}

fn default_outline() -> usize {
    DEFAULT_TOP_N_OUTLINE
}
fn default_content() -> usize {
    DEFAULT_TOP_N_CONTENT
}
fn default_reference() -> usize {
    DEFAULT_TOP_N_REFERENCE
}

impl Default for TopN {
    fn default() -> Self {
        Self { outline: DEFAULT_TOP_N_OUTLINE, content: DEFAULT_TOP_N_CONTENT, reference: DEFAULT_TOP_N_REFERENCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
    #[serde(default = "default_index")]
    pub index: PathBuf,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    /// JSON list of prompt templates replacing the builtin ones by id.
    #[serde(default)]
    pub templates: Option<PathBuf>,
}

fn default_cache() -> PathBuf {
    PathBuf::from("cache/judge.jsonl")
}
fn default_index() -> PathBuf {
    PathBuf::from("index/vectors.jsonl")
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Paths {
    fn default() -> Self {
        Self { cache: default_cache(), index: default_index(), out: default_out(), mock_script: None, templates: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaConfig {
    /// Judge model ids, all served by the `[judge]` provider.
    pub judges: Vec<String>,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self { judges: vec!["judge-a".into(), "judge-b".into(), "judge-c".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_in_flight")]
    pub in_flight: usize,
    #[serde(default = "default_context_budget")]
    pub context_budget: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub top_n: TopN,
    #[serde(default = "default_judge")]
    pub judge: ProviderConfig,
    #[serde(default = "default_embedding")]
    pub embedding: ProviderConfig,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub arena: ArenaConfig,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_in_flight() -> usize {
    4
}
fn default_context_budget() -> usize {
    DEFAULT_CONTEXT_BUDGET
}
fn default_timeout() -> u64 {
    120
}
fn default_judge() -> ProviderConfig {
    ProviderConfig { provider: ProviderKind::Mock, model: "mock-judge".into(), base_url: None }
}
fn default_embedding() -> ProviderConfig {
    ProviderConfig { provider: ProviderKind::Mock, model: "mock-embedding".into(), base_url: None }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            temperature: DEFAULT_TEMPERATURE,
            in_flight: default_in_flight(),
            context_budget: DEFAULT_CONTEXT_BUDGET,
            timeout_secs: default_timeout(),
            top_n: TopN::default(),
            judge: default_judge(),
            embedding: default_embedding(),
            paths: Paths::default(),
            arena: ArenaConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses and validates; relative paths stay relative.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Invalid { path: origin.into(), message: e.to_string() })?;
        config.validate().map_err(|message| ConfigError::Invalid { path: origin.into(), message })?;
        Ok(config)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ConfigError::MissingFile(path.to_path_buf()),
            _ => ConfigError::Invalid { path: path.display().to_string(), message: e.to_string() },
        })?;
        let mut config = Self::parse(&text, &path.display().to_string())?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.paths.cache);
        join(&mut self.paths.index);
        join(&mut self.paths.out);
        if let Some(p) = self.paths.mock_script.as_mut() {
            join(p);
        }
        if let Some(p) = self.paths.templates.as_mut() {
            join(p);
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        for (name, n) in
            [("outline", self.top_n.outline), ("content", self.top_n.content), ("reference", self.top_n.reference)]
        {
            if n == 0 {
                return Err(format!("top_n.{name} must be at least 1"));
            }
        }
        if self.in_flight == 0 {
            return Err("in_flight must be at least 1".into());
        }
        if self.context_budget < 1000 {
            return Err("context_budget must be at least 1000 characters".into());
        }
        for (name, p) in [("judge", &self.judge), ("embedding", &self.embedding)] {
            if p.model.trim().is_empty() {
                return Err(format!("{name}.model is empty"));
            }
            if p.provider == ProviderKind::Http && p.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                return Err(format!("{name}.base_url is required for the http provider"));
            }
        }
        if self.arena.judges.is_empty() {
            return Err("arena.judges is empty".into());
        }
        Ok(())
    }

    /// Digest of every setting that can change an output value. Paths are
    /// excluded so that relocating a run does not change its digest; the
    /// mock script is covered by the cache digest.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let c = PipelineConfig::parse("", "t").unwrap();
        assert_eq!(c.temperature, 0.5);
        assert_eq!((c.top_n.outline, c.top_n.content, c.top_n.reference), (5, 5, 20));
        assert_eq!(c.judge.provider, ProviderKind::Mock);
        assert_eq!(c, PipelineConfig::default());
    }

    #[test]
    fn rejects_invalid_values() {
        for text in [
            "temperature = 2.5",
            "temperature = -0.1",
            "[top_n]\nreference = 0",
            "in_flight = 0",
            "[judge]\nprovider = \"http\"\nmodel = \"m\"",
            "unknown_key = 1",
            "[arena]\njudges = []",
        ] {
            assert!(matches!(PipelineConfig::parse(text, "t"), Err(ConfigError::Invalid { .. })), "{text}");
        }
        assert!(PipelineConfig::parse("temperature = 2.0\n[top_n]\noutline = 1", "t").is_ok());
    }

    #[test]
    fn digest_ignores_paths_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.out = PathBuf::from("/elsewhere");
        b.resolve_paths(Path::new("/base"));
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[paths]\nout = \"o\"\nindex = \"/abs/i.jsonl\"").unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.paths.out, dir.path().join("o"));
        assert_eq!(c.paths.index, PathBuf::from("/abs/i.jsonl"));
        assert!(matches!(PipelineConfig::load(&dir.path().join("nope.toml")), Err(ConfigError::MissingFile(_))));
    }
}
