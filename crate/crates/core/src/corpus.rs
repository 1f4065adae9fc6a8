//! Corpus manifests: loading, validation, human/generated pairing and topic
//! mining.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{self, DecomposeError, Decomposition};
use crate::judgekit::{Judge, JudgeError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("malformed manifest {path}: {message}")]
    MalformedManifest { path: String, message: String },
    #[error("duplicate entry id '{0}'")]
    DuplicateId(String),
    #[error("generated entry '{id}' has topic_key '{topic_key}' matching no human entry")]
    UnpairedGeneratedEntry { id: String, topic_key: String },
    #[error("decomposition of '{id}' failed ({facet}): {source}")]
    Decomposition {
        id: String,
        facet: &'static str,
        #[source]
        source: DecomposeError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub topic: String,
    pub topic_key: String,
    pub role: Role,
    #[serde(default)]
    pub system_name: Option<String>,
    pub document_path: String,
}

impl ManifestEntry {
    /// The topic label, falling back to the title when none has been mined.
    pub fn topic_label(&self) -> &str {
        if self.topic.trim().is_empty() {
            &self.title
        } else {
            &self.topic
        }
    }

    /// System name used in reports; human entries report as `human`.
    pub fn system(&self) -> &str {
        self.system_name.as_deref().unwrap_or("human")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub entries: Vec<ManifestEntry>,
    /// Directory that `document_path`s are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A generated survey and the human survey sharing its `topic_key`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyPair<'a> {
    pub generated: &'a ManifestEntry,
    pub human: &'a ManifestEntry,
}

impl CorpusManifest {
    pub fn parse(text: &str, origin: &str, base_dir: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut manifest: CorpusManifest = deserialize_exact(de).map_err(|e| CorpusError::MalformedManifest {
            path: origin.to_string(),
            message: format!("line {}, column {}: {}", e.line(), e.column(), e),
        })?;
        manifest.base_dir = base_dir.into();
        manifest.validate(origin)?;
        Ok(manifest)
    }

    fn validate(&self, origin: &str) -> Result<(), CorpusError> {
        let malformed = |message: String| CorpusError::MalformedManifest { path: origin.to_string(), message };
        let mut ids = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.id.is_empty()
                || !e.id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
                || e.id.starts_with('.')
            {
                return Err(malformed(format!(
                    "entries[{i}].id '{}' must be non-empty and use only [A-Za-z0-9._-]",
                    e.id
                )));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(CorpusError::DuplicateId(e.id.clone()));
            }
            if e.topic_key.is_empty() {
                return Err(malformed(format!("entries[{i}].topic_key is empty")));
            }
            if e.document_path.is_empty() {
                return Err(malformed(format!("entries[{i}].document_path is empty")));
            }
            match (e.role, &e.system_name) {
                (Role::Generated, None) => {
                    return Err(malformed(format!("entries[{i}].system_name is required for generated entries")))
                }
                (Role::Human, Some(_)) => {
                    return Err(malformed(format!("entries[{i}].system_name must be absent for human entries")))
                }
                _ => {}
            }
        }
        let mut human_keys: HashMap<&str, usize> = HashMap::new();
        for e in self.humans() {
            *human_keys.entry(e.topic_key.as_str()).or_default() += 1;
        }
        if let Some((key, _)) = human_keys.iter().find(|(_, &n)| n > 1) {
            return Err(malformed(format!("topic_key '{key}' is shared by several human entries")));
        }
        for e in self.generated() {
            if !human_keys.contains_key(e.topic_key.as_str()) {
                return Err(CorpusError::UnpairedGeneratedEntry { id: e.id.clone(), topic_key: e.topic_key.clone() });
            }
        }
        Ok(())
    }

    pub fn humans(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.role == Role::Human)
    }

    pub fn generated(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.role == Role::Generated)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn human_for(&self, topic_key: &str) -> Option<&ManifestEntry> {
        self.humans().find(|e| e.topic_key == topic_key)
    }

    /// Every generated entry paired with its human counterpart, in manifest order.
    pub fn pairs(&self) -> Vec<SurveyPair<'_>> {
        self.generated()
            .filter_map(|g| self.human_for(&g.topic_key).map(|h| SurveyPair { generated: g, human: h }))
            .collect()
    }

    pub fn pairs_by_system(&self) -> BTreeMap<&str, Vec<SurveyPair<'_>>> {
        let mut out: BTreeMap<&str, Vec<SurveyPair<'_>>> = BTreeMap::new();
        for pair in self.pairs() {
            out.entry(pair.generated.system()).or_default().push(pair);
        }
        out
    }

    pub fn systems(&self) -> Vec<&str> {
        self.pairs_by_system().into_keys().collect()
    }

    pub fn document_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.document_path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_json()).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }
}

fn deserialize_exact(
    de: &mut serde_json::Deserializer<serde_json::de::StrRead<'_>>,
) -> Result<CorpusManifest, serde_json::Error> {
    let m = CorpusManifest::deserialize(&mut *de)?;
    de.end()?;
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let text = read_text(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    CorpusManifest::parse(&text, &path.display().to_string(), base)
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => CorpusError::MissingFile(path.to_path_buf()),
        _ => CorpusError::Io { path: path.to_path_buf(), source },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub entry: ManifestEntry,
    #[serde(flatten)]
    pub parts: Decomposition,
}

impl SurveyRecord {
    pub fn has_content(&self) -> bool {
        self.parts.sections.iter().any(|s| !s.body.is_empty())
    }

    pub fn has_references(&self) -> bool {
        !self.parts.references.is_empty()
    }

    /// Names of facets with nothing to evaluate.
    pub fn missing_facets(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.has_content() {
            out.push("content");
        }
        if !self.has_references() {
            out.push("reference");
        }
        out
    }
}

pub fn survey_from_text(entry: &ManifestEntry, text: &str) -> Result<SurveyRecord, CorpusError> {
    let parts = decompose::decompose(text).map_err(|source| CorpusError::Decomposition {
        id: entry.id.clone(),
        facet: match source {
            DecomposeError::NoHeadings => "outline",
            DecomposeError::DuplicateReferenceKey(_) => "reference",
        },
        source,
    })?;
    let mut record = SurveyRecord { entry: entry.clone(), parts };
    for facet in record.missing_facets() {
        record.parts.warnings.push(format!("facet '{facet}' is empty"));
    }
    Ok(record)
}

pub fn load_survey(manifest: &CorpusManifest, entry: &ManifestEntry) -> Result<SurveyRecord, CorpusError> {
    let text = read_text(&manifest.document_path(entry))?;
    survey_from_text(entry, &text)
}

pub fn mine_topic(title: &str, judge: &Judge<'_>) -> Result<String, JudgeError> {
    judge.topic_label(title)
}

/// Fills every empty `topic` in the manifest with a mined label.
pub fn mine_topics(manifest: &mut CorpusManifest, judge: &Judge<'_>) -> Result<usize, JudgeError> {
    let mut mined = 0;
    for entry in manifest.entries.iter_mut().filter(|e| e.topic.trim().is_empty()) {
        entry.topic = mine_topic(&entry.title, judge)?;
        mined += 1;
    }
    Ok(mined)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, key: &str, system: Option<&str>) -> serde_json::Value {
        serde_json::json!({
            "id": id, "title": format!("Title {id}"), "topic": "", "topic_key": key,
            "role": if system.is_some() { "generated" } else { "human" },
            "system_name": system, "document_path": format!("{id}.md"),
        })
    }

    fn manifest(entries: Vec<serde_json::Value>) -> Result<CorpusManifest, CorpusError> {
        let v = serde_json::json!({"corpus_id": "c", "entries": entries});
        CorpusManifest::parse(&v.to_string(), "test", ".")
    }

    #[test]
    fn minimal_pair() {
        let m = manifest(vec![entry("h", "t1", None), entry("g", "t1", Some("sys"))]).unwrap();
        assert_eq!(m.entries.len(), 2);
        let pairs = m.pairs();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].human.id, "h");
    }

    #[test]
    fn unpaired_generated() {
        let err = manifest(vec![entry("h", "t1", None), entry("g", "t2", Some("sys"))]).unwrap_err();
        assert!(matches!(err, CorpusError::UnpairedGeneratedEntry { .. }));
    }

    #[test]
    fn duplicate_id() {
        let err = manifest(vec![entry("h", "t1", None), entry("h", "t2", None)]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "h"));
    }

    #[test]
    fn role_and_system_name_must_agree() {
        let mut bad = entry("g", "t1", Some("sys"));
        bad["system_name"] = serde_json::Value::Null;
        let err = manifest(vec![entry("h", "t1", None), bad]).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedManifest { .. }));

        let mut bad = entry("h", "t1", None);
        bad["system_name"] = "x".into();
        assert!(manifest(vec![bad]).is_err());
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = CorpusManifest::parse("{\"corpus_id\": \"c\",\n \"entries\": [ {] }", "m.json", ".").unwrap_err();
        match err {
            CorpusError::MalformedManifest { message, .. } => assert!(message.contains("line 2")),
            other => panic!("{other:?}"),
        }
        let err = CorpusManifest::parse("{\"corpus_id\": \"c\"}", "m.json", ".").unwrap_err();
        assert!(err.to_string().contains("entries"));
    }

    #[test]
    fn missing_manifest_file() {
        let err = load_manifest(Path::new("/nonexistent/manifest.json")).unwrap_err();
        assert!(matches!(err, CorpusError::MissingFile(_)));
    }

    #[test]
    fn empty_document_fails_on_outline() {
        let e: ManifestEntry = serde_json::from_value(entry("h", "t", None)).unwrap();
        let err = survey_from_text(&e, "").unwrap_err();
        assert!(matches!(err, CorpusError::Decomposition { facet: "outline", .. }));
    }

    #[test]
    fn missing_references_flagged() {
        let e: ManifestEntry = serde_json::from_value(entry("h", "t", None)).unwrap();
        let r = survey_from_text(&e, "# A\ntext\n# B\nmore").unwrap();
        assert!(r.parts.references.is_empty());
        assert_eq!(r.missing_facets(), ["reference"]);
        assert!(r.parts.warnings.iter().any(|w| w.contains("reference")));
    }
}
