//! Deterministic stand-ins for the judge and embedding providers.
//!
//! The mock judge answers from a [`MockScript`]: an override table keyed by
//! payload digest, then per-kind defaults. The mock embedder hashes
//! `(seed, text)` into a pseudo-random unit vector, with an override table
//! for texts that need a controlled similarity to an anchor text.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedkit::{normalize, EmbedError, EmbeddingProvider};
use crate::judgekit::{format_verdict_block, JudgeError, JudgeProvider, JudgeRequest, Payload, Side, TaskKind};

pub const DEFAULT_DIMENSION: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedVerdict {
    /// Same answer for every item.
    Bool(bool),
    /// Pattern cycled over the items of a verdict; single-item relevance
    /// verdicts index it by reference position.
    Bools(Vec<bool>),
    /// Each item is `true` (or `A` for pairwise) with this probability,
    /// drawn from a hash of the seed, judge model and payload.
    Coin(f64),
    Score(u8),
    Scores([u8; 5]),
    /// Seeded uniform scores in `[lo, hi]`.
    UniformScore(u8, u8),
    Winner(Side),
    Label(String),
    /// Topic labels repeat the title.
    Echo,
    /// Raw response text, returned verbatim.
    Raw(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityOverride {
    pub anchor: String,
    pub text: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub defaults: BTreeMap<TaskKind, ScriptedVerdict>,
    /// Payload digest → verdict.
    #[serde(default)]
    pub overrides: BTreeMap<String, ScriptedVerdict>,
    #[serde(default)]
    pub embedding_dimension: Option<usize>,
    #[serde(default)]
    pub similarity_overrides: Vec<SimilarityOverride>,
}

impl Default for MockScript {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

impl MockScript {
    /// Builtin defaults: mostly-positive coins for binary judgments, fixed
    /// mid-high scores, fair pairwise coin.
    pub fn with_seed(seed: u64) -> Self {
        let defaults = BTreeMap::from([
            (TaskKind::ChildrenCoherence, ScriptedVerdict::Coin(0.85)),
            (TaskKind::OutlineQuality, ScriptedVerdict::Score(4)),
            (TaskKind::ContentQuality, ScriptedVerdict::Scores([5, 4, 5, 4, 4])),
            (TaskKind::ReferenceQuality, ScriptedVerdict::Score(4)),
            (TaskKind::CitationSupport, ScriptedVerdict::Coin(0.75)),
            (TaskKind::ReferenceRelevance, ScriptedVerdict::Coin(0.8)),
            (TaskKind::Pairwise, ScriptedVerdict::Coin(0.5)),
            (TaskKind::TopicLabel, ScriptedVerdict::Echo),
            (TaskKind::RubricCriteria, ScriptedVerdict::Label("Clear and specific".into())),
        ]);
        Self { seed, defaults, overrides: BTreeMap::new(), embedding_dimension: None, similarity_overrides: Vec::new() }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn set_default(&mut self, kind: TaskKind, verdict: ScriptedVerdict) -> &mut Self {
        self.defaults.insert(kind, verdict);
        self
    }

    pub fn set_override(&mut self, payload: &Payload, verdict: ScriptedVerdict) -> &mut Self {
        self.overrides.insert(payload.digest(), verdict);
        self
    }

    /// Override first, then the kind default, then the builtin default.
    pub fn lookup(&self, payload: &Payload) -> ScriptedVerdict {
        let kind = payload.kind();
        self.overrides
            .get(&payload.digest())
            .or_else(|| self.defaults.get(&kind))
            .cloned()
            .unwrap_or_else(|| Self::with_seed(self.seed).defaults[&kind].clone())
    }
}

/// Uniform draw in [0, 1) from a hash of the parts.
fn hash_unit(parts: &[&[u8]]) -> f64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    let bits = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

pub struct MockJudge {
    model_id: String,
    script: MockScript,
}

impl MockJudge {
    pub fn new(model_id: impl Into<String>, script: MockScript) -> Self {
        Self { model_id: model_id.into(), script }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    fn draw(&self, digest: &str, item: usize) -> f64 {
        hash_unit(&[
            &self.script.seed.to_le_bytes(),
            self.model_id.as_bytes(),
            digest.as_bytes(),
            &(item as u64).to_le_bytes(),
        ])
    }

    fn boolean(&self, verdict: &ScriptedVerdict, digest: &str, item: usize) -> Option<bool> {
        match verdict {
            ScriptedVerdict::Bool(b) => Some(*b),
            ScriptedVerdict::Bools(p) if !p.is_empty() => Some(p[item % p.len()]),
            ScriptedVerdict::Coin(p) => Some(self.draw(digest, item) < *p),
            _ => None,
        }
    }

    fn score(&self, verdict: &ScriptedVerdict, digest: &str, item: usize) -> Option<u8> {
        match verdict {
            ScriptedVerdict::Score(s) => Some(*s),
            ScriptedVerdict::Scores(s) => Some(s[item % 5]),
            ScriptedVerdict::UniformScore(lo, hi) if lo <= hi => {
                let span = f64::from(hi - lo + 1);
                Some(lo + (self.draw(digest, item) * span).floor() as u8)
            }
            _ => None,
        }
    }

    /// Verdict tokens for a payload. Fails when the script entry does not fit
    /// the task kind.
    pub fn tokens(&self, payload: &Payload) -> Result<Vec<String>, String> {
        let verdict = self.script.lookup(payload);
        if let ScriptedVerdict::Raw(_) = verdict {
            return Err("raw".into());
        }
        let digest = payload.digest();
        let yes_no = |b: bool| if b { "yes" } else { "no" }.to_string();
        let mismatch = || format!("script verdict {verdict:?} does not fit {}", payload.kind());
        let tokens = match payload {
            Payload::ChildrenCoherence { .. } | Payload::CitationSupport { .. } => (0..payload.item_count())
                .map(|i| self.boolean(&verdict, &digest, i).map(yes_no))
                .collect::<Option<Vec<_>>>(),
            Payload::ReferenceRelevance { position, .. } => {
                let item = position.saturating_sub(1);
                let b = match &verdict {
                    ScriptedVerdict::Coin(_) => self.boolean(&verdict, &digest, 0),
                    _ => self.boolean(&verdict, &digest, item),
                };
                b.map(|b| vec![yes_no(b)])
            }
            Payload::OutlineQuality { .. } | Payload::ReferenceQuality { .. } => {
                self.score(&verdict, &digest, 0).map(|s| vec![s.to_string()])
            }
            Payload::ContentQuality { .. } => {
                (0..5).map(|i| self.score(&verdict, &digest, i).map(|s| s.to_string())).collect()
            }
            Payload::Pairwise { .. } => match &verdict {
                ScriptedVerdict::Winner(Side::A) => Some(vec!["A".into()]),
                ScriptedVerdict::Winner(Side::B) => Some(vec!["B".into()]),
                ScriptedVerdict::Label(l) => Some(vec![l.clone()]),
                other => self.boolean(other, &digest, 0).map(|a| vec![if a { "A" } else { "B" }.into()]),
            },
            Payload::TopicLabel { title } => match &verdict {
                ScriptedVerdict::Echo => Some(vec![title.clone()]),
                ScriptedVerdict::Label(l) => Some(vec![l.clone()]),
                _ => None,
            },
            Payload::RubricCriteria { dimension } => match &verdict {
                ScriptedVerdict::Echo => Some(vec![dimension.clone()]),
                ScriptedVerdict::Label(l) => Some(l.lines().map(str::to_string).collect()),
                _ => None,
            },
        };
        tokens.ok_or_else(mismatch)
    }
}

impl JudgeProvider for MockJudge {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        let payload = &request.task.payload;
        if let ScriptedVerdict::Raw(raw) = self.script.lookup(payload) {
            return Ok(raw);
        }
        self.tokens(payload)
            .map(|t| format_verdict_block(&t))
            .map_err(|m| JudgeError::ProviderUnavailable(format!("mock judge: {m}")))
    }
}

/// Pseudo-random unit vector determined by `(seed, text)`.
pub fn mock_embed(text: &str, seed: u64, dimension: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(text.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let v: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
    normalize(v).expect("gaussian draw is nonzero")
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    model_id: String,
    seed: u64,
    dimension: usize,
    overrides: HashMap<String, Vec<f64>>,
}

impl MockEmbedder {
    pub fn new(seed: u64, dimension: usize) -> Self {
        Self { model_id: "mock-embedding".into(), seed, dimension, overrides: HashMap::new() }
    }

    pub fn from_script(script: &MockScript) -> Result<Self, EmbedError> {
        let mut e = Self::new(script.seed, script.embedding_dimension.unwrap_or(DEFAULT_DIMENSION));
        for o in &script.similarity_overrides {
            e.set_similarity(&o.anchor, &o.text, o.cosine)?;
        }
        Ok(e)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        self.overrides.get(text).cloned().unwrap_or_else(|| mock_embed(text, self.seed, self.dimension))
    }

    /// Makes `text` embed at exactly `target` cosine to `anchor`, by
    /// Gram–Schmidt of the text's hash vector against the anchor's vector.
    pub fn set_similarity(&mut self, anchor: &str, text: &str, target: f64) -> Result<(), EmbedError> {
        if !(-1.0..=1.0).contains(&target) || anchor == text {
            return Err(EmbedError::ProviderUnavailable(format!(
                "invalid similarity override {anchor:?} ~ {text:?} = {target}"
            )));
        }
        let a = self.vector(anchor);
        let r = mock_embed(text, self.seed, self.dimension);
        let proj: f64 = a.iter().zip(&r).map(|(x, y)| x * y).sum();
        let orth = normalize(r.iter().zip(&a).map(|(ri, ai)| ri - proj * ai).collect())?;
        let s = (1.0 - target * target).max(0.0).sqrt();
        let v: Vec<f64> = a.iter().zip(&orth).map(|(ai, oi)| target * ai + s * oi).collect();
        self.overrides.insert(text.to_string(), normalize(v)?);
        Ok(())
    }

    /// Uses a fixed vector for `text`.
    pub fn set_vector(&mut self, text: &str, vector: Vec<f64>) -> Result<(), EmbedError> {
        if vector.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch { expected: self.dimension, actual: vector.len() });
        }
        self.overrides.insert(text.to_string(), normalize(vector)?);
        Ok(())
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedkit::{cosine, embed_texts, l2_norm};
    use crate::judgekit::{parse_verdict, JudgeTask, VerdictValue};

    #[test]
    fn embedding_is_pure_in_seed_and_text() {
        assert_eq!(mock_embed("abc", 1, 16), mock_embed("abc", 1, 16));
        assert_ne!(mock_embed("abc", 1, 16), mock_embed("abc", 2, 16));
        let c = cosine(&mock_embed("abc", 1, 16), &mock_embed("abd", 1, 16)).unwrap();
        assert!(c < 1.0);
    }

    #[test]
    fn batch_vectors_are_unit_norm() {
        let e = MockEmbedder::new(3, 32);
        let texts: Vec<String> = ["one", "two", "three"].iter().map(|s| s.to_string()).collect();
        let vs = embed_texts(&texts, &e).unwrap();
        assert_eq!(vs.len(), 3);
        for v in vs {
            assert!((l2_norm(&v) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn similarity_override_hits_target() {
        let mut e = MockEmbedder::new(11, 64);
        e.set_similarity("anchor text", "other text", 0.8).unwrap();
        let c = cosine(&e.vector("anchor text"), &e.vector("other text")).unwrap();
        assert!((c - 0.8).abs() <= 1e-6, "{c}");
        e.set_similarity("anchor text", "third", -0.3).unwrap();
        let c = cosine(&e.vector("anchor text"), &e.vector("third")).unwrap();
        assert!((c + 0.3).abs() <= 1e-6);
    }

    fn task(payload: Payload) -> JudgeTask {
        JudgeTask { payload, template_id: String::new(), temperature: 0.5 }
    }

    fn answer(judge: &MockJudge, payload: Payload) -> VerdictValue {
        let t = task(payload);
        let raw = judge.complete(&JudgeRequest { task: &t, prompt: "", attempt: 0 }).unwrap();
        parse_verdict(&t.payload, &raw).unwrap()
    }

    fn coherence(n: usize) -> Payload {
        Payload::ChildrenCoherence {
            topic: "t".into(),
            parent_path: vec![],
            children: (0..n).map(|i| format!("c{i}")).collect(),
        }
    }

    #[test]
    fn scripted_tables() {
        let mut script = MockScript::with_seed(0);
        script.set_default(TaskKind::ChildrenCoherence, ScriptedVerdict::Bool(true));
        script.set_default(TaskKind::ContentQuality, ScriptedVerdict::Scores([5, 4, 5, 5, 4]));
        script.set_override(&coherence(2), ScriptedVerdict::Bools(vec![true, false]));
        let judge = MockJudge::new("m", script);
        assert_eq!(answer(&judge, coherence(3)), VerdictValue::Booleans(vec![true; 3]));
        assert_eq!(answer(&judge, coherence(2)), VerdictValue::Booleans(vec![true, false]));
        assert_eq!(
            answer(&judge, Payload::ContentQuality { topic: "t".into(), content: "c".into() }),
            VerdictValue::Scores([5, 4, 5, 5, 4])
        );
    }

    #[test]
    fn relevance_pattern_indexes_by_position() {
        let mut script = MockScript::with_seed(0);
        let table = vec![true, true, true, false, true, true, false, true, false, true];
        script.set_default(TaskKind::ReferenceRelevance, ScriptedVerdict::Bools(table));
        let judge = MockJudge::new("m", script);
        let trues = (1..=20)
            .filter(|&p| {
                answer(
                    &judge,
                    Payload::ReferenceRelevance { topic: "t".into(), reference: format!("r{p}"), position: p },
                ) == VerdictValue::Boolean(true)
            })
            .count();
        assert_eq!(trues, 14);
    }

    #[test]
    fn coin_mode_is_reproducible() {
        let draw = |seed: u64| -> Vec<VerdictValue> {
            let mut script = MockScript::with_seed(seed);
            script.set_default(TaskKind::ChildrenCoherence, ScriptedVerdict::Coin(0.5));
            let judge = MockJudge::new("m", script);
            (1..20).map(|n| answer(&judge, coherence(n))).collect()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn raw_and_mismatched_scripts() {
        let mut script = MockScript::with_seed(0);
        script.set_default(TaskKind::OutlineQuality, ScriptedVerdict::Raw("no block".into()));
        script.set_default(TaskKind::ReferenceQuality, ScriptedVerdict::Bool(true));
        let judge = MockJudge::new("m", script);
        let t = task(Payload::OutlineQuality { topic: "t".into(), outline: "o".into() });
        assert_eq!(judge.complete(&JudgeRequest { task: &t, prompt: "", attempt: 0 }).unwrap(), "no block");
        let t = task(Payload::ReferenceQuality { topic: "t".into(), references: vec!["r".into()] });
        assert!(judge.complete(&JudgeRequest { task: &t, prompt: "", attempt: 0 }).is_err());
    }

    #[test]
    fn script_json_round_trip() {
        let mut script = MockScript::with_seed(9);
        script.similarity_overrides.push(SimilarityOverride { anchor: "a".into(), text: "b".into(), cosine: 0.5 });
        script.set_default(TaskKind::Pairwise, ScriptedVerdict::Winner(Side::A));
        let json = serde_json::to_string(&script).unwrap();
        assert_eq!(serde_json::from_str::<MockScript>(&json).unwrap(), script);
        let parsed: MockScript =
            serde_json::from_str(r#"{"defaults": {"outline_quality": {"score": 3}, "topic_label": "echo"}}"#).unwrap();
        assert_eq!(parsed.defaults[&TaskKind::OutlineQuality], ScriptedVerdict::Score(3));
    }
}
