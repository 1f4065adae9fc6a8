//! Embedding provider contract, cosine similarity and an exact, persisted
//! vector index.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const NORM_TOLERANCE: f64 = 1e-6;
const INDEX_FORMAT: &str = "surveyeval-vector-index";
const INDEX_VERSION: &str = "v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("empty text at position {0}")]
    EmptyText(usize),
    #[error("no human {component} units for survey '{survey_id}'")]
    EmptyHumanSide { survey_id: String, component: Component },
    #[error("duplicate unit {0}")]
    DuplicateUnit(String),
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Survey facet a unit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Outline,
    Content,
    Reference,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Outline, Component::Content, Component::Reference];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Outline => "outline",
            Component::Content => "content",
            Component::Reference => "reference",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outline" => Ok(Component::Outline),
            "content" => Ok(Component::Content),
            "reference" => Ok(Component::Reference),
            other => Err(format!("unknown component '{other}'")),
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// One raw (not necessarily normalized) vector per text, same order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, EmbedError> {
    let norm = l2_norm(&v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbedError::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Embeds a batch and returns unit-normalized vectors.
pub fn embed_texts(texts: &[String], provider: &dyn EmbeddingProvider) -> Result<Vec<Vec<f64>>, EmbedError> {
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(EmbedError::EmptyText(i));
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let raw = provider.embed(texts)?;
    if raw.len() != texts.len() {
        return Err(EmbedError::ProviderUnavailable(format!(
            "provider returned {} vectors for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    let dim = raw[0].len();
    raw.into_iter()
        .map(|v| {
            if v.len() != dim {
                return Err(EmbedError::DimensionMismatch { expected: dim, actual: v.len() });
            }
            normalize(v)
        })
        .collect()
}

/// Cosine similarity. Identical vectors give exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch { expected: a.len(), actual: b.len() });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    if a == b {
        return Ok(1.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingUnit {
    pub survey_id: String,
    pub component: Component,
    /// 1-based unit position within its survey and component.
    pub index: usize,
    pub text: String,
    pub vector: Vec<f64>,
}

impl EmbeddingUnit {
    pub fn key(&self) -> UnitKey {
        UnitKey { survey_id: self.survey_id.clone(), component: self.component, index: self.index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitKey {
    pub survey_id: String,
    pub component: Component,
    pub index: usize,
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.survey_id, self.component, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanMatch {
    pub index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorIndex {
    dimension: Option<usize>,
    units: BTreeMap<UnitKey, EmbeddingUnit>,
}

impl VectorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Inserts a unit, normalizing its vector. Dimensions must agree across
    /// the index and keys must be unique.
    pub fn insert(&mut self, mut unit: EmbeddingUnit) -> Result<(), EmbedError> {
        if let Some(dim) = self.dimension {
            if unit.vector.len() != dim {
                return Err(EmbedError::DimensionMismatch { expected: dim, actual: unit.vector.len() });
            }
        }
        if (l2_norm(&unit.vector) - 1.0).abs() > NORM_TOLERANCE {
            unit.vector = normalize(unit.vector)?;
        }
        let key = unit.key();
        if self.units.contains_key(&key) {
            return Err(EmbedError::DuplicateUnit(key.to_string()));
        }
        self.dimension = Some(unit.vector.len());
        self.units.insert(key, unit);
        Ok(())
    }

    pub fn get(&self, key: &UnitKey) -> Option<&EmbeddingUnit> {
        self.units.get(key)
    }

    pub fn units(&self) -> impl Iterator<Item = &EmbeddingUnit> {
        self.units.values()
    }

    /// Units of one survey and component, ordered by index.
    pub fn survey_units(&self, survey_id: &str, component: Component) -> impl Iterator<Item = &EmbeddingUnit> {
        let lo = UnitKey { survey_id: survey_id.to_string(), component, index: 0 };
        let hi = UnitKey { survey_id: survey_id.to_string(), component, index: usize::MAX };
        self.units.range(lo..=hi).map(|(_, u)| u)
    }

    pub fn count(&self, survey_id: &str, component: Component) -> usize {
        self.survey_units(survey_id, component).count()
    }

    pub fn survey_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.units.keys().map(|k| k.survey_id.as_str()).collect();
        ids.dedup();
        ids
    }

    /// Highest-cosine unit of the same component in the human survey; ties go
    /// to the lowest index.
    pub fn nearest_human_match(&self, unit: &EmbeddingUnit, human_survey_id: &str) -> Result<HumanMatch, EmbedError> {
        let mut best: Option<HumanMatch> = None;
        for human in self.survey_units(human_survey_id, unit.component) {
            let similarity = cosine(&unit.vector, &human.vector)?;
            if best.is_none_or(|b| similarity > b.similarity) {
                best = Some(HumanMatch { index: human.index, similarity });
            }
        }
        best.ok_or_else(|| EmbedError::EmptyHumanSide {
            survey_id: human_survey_id.to_string(),
            component: unit.component,
        })
    }

    /// Serialized `v1` form: a JSON header line followed by one JSON record
    /// per unit in key order. The header checksum is SHA-256 over the record
    /// lines.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = String::new();
        for unit in self.units.values() {
            body.push_str(&serde_json::to_string(unit).expect("unit serializes"));
            body.push('\n');
        }
        let header = IndexHeader {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION.to_string(),
            dimension: self.dimension.unwrap_or(0),
            unit_count: self.units.len(),
            checksum: hex::encode(Sha256::digest(body.as_bytes())),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        out.push_str(&body);
        out.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbedError> {
        let corrupt = |m: String| EmbedError::CorruptIndex(m);
        let text = std::str::from_utf8(bytes).map_err(|e| corrupt(e.to_string()))?;
        let (header_line, body) = text.split_once('\n').ok_or_else(|| corrupt("missing header".into()))?;
        let header: IndexHeader = serde_json::from_str(header_line).map_err(|e| corrupt(format!("header: {e}")))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(corrupt(format!("unsupported format {} {}", header.format, header.version)));
        }
        if hex::encode(Sha256::digest(body.as_bytes())) != header.checksum {
            return Err(corrupt("checksum mismatch".into()));
        }
        let mut index = VectorIndex::new();
        for (i, line) in body.lines().enumerate() {
            let unit: EmbeddingUnit =
                serde_json::from_str(line).map_err(|e| corrupt(format!("record {}: {e}", i + 1)))?;
            if unit.vector.len() != header.dimension {
                return Err(corrupt(format!("record {} has dimension {}", i + 1, unit.vector.len())));
            }
            // Stored vectors are already normalized; keep them bit-exact.
            let key = unit.key();
            if index.units.insert(key.clone(), unit).is_some() {
                return Err(corrupt(format!("duplicate unit {key}")));
            }
        }
        if index.units.len() != header.unit_count {
            return Err(corrupt(format!("header lists {} units, found {}", header.unit_count, index.units.len())));
        }
        index.dimension = (header.unit_count > 0).then_some(header.dimension);
        Ok(index)
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| EmbedError::Io(e.to_string()))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| EmbedError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => EmbedError::MissingFile(path.display().to_string()),
            _ => EmbedError::Io(format!("{}: {e}", path.display())),
        })?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: String,
    dimension: usize,
    unit_count: usize,
    checksum: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(survey: &str, component: Component, index: usize, vector: Vec<f64>) -> EmbeddingUnit {
        EmbeddingUnit { survey_id: survey.into(), component, index, text: format!("u{index}"), vector }
    }

    // 0.7071 is the hand-computed value, kept literal on purpose.
    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((cosine(&[s, s], &[1.0, 0.0]).unwrap() - 0.7071).abs() < 1e-4);
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(EmbedError::DimensionMismatch { .. })));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(EmbedError::ZeroVector));
    }

    #[test]
    fn insert_normalizes_and_checks_dimension() {
        let mut idx = VectorIndex::new();
        idx.insert(unit("h", Component::Outline, 1, vec![3.0, 4.0])).unwrap();
        let stored = idx.survey_units("h", Component::Outline).next().unwrap();
        assert!((l2_norm(&stored.vector) - 1.0).abs() < 1e-12);
        assert!(matches!(
            idx.insert(unit("h", Component::Outline, 2, vec![1.0, 0.0, 0.0])),
            Err(EmbedError::DimensionMismatch { .. })
        ));
        assert_eq!(idx.insert(unit("h", Component::Outline, 3, vec![0.0, 0.0])), Err(EmbedError::ZeroVector));
        assert!(matches!(
            idx.insert(unit("h", Component::Outline, 1, vec![1.0, 0.0])),
            Err(EmbedError::DuplicateUnit(_))
        ));
    }

    #[test]
    fn nearest_match_picks_closest_and_breaks_ties_low() {
        let mut idx = VectorIndex::new();
        idx.insert(unit("h", Component::Content, 1, vec![1.0, 0.0])).unwrap();
        idx.insert(unit("h", Component::Content, 2, vec![0.0, 1.0])).unwrap();
        idx.insert(unit("h", Component::Content, 3, vec![0.0, 1.0])).unwrap();
        idx.insert(unit("h", Component::Outline, 1, vec![0.0, 1.0])).unwrap();
        let g = unit("g", Component::Content, 1, vec![0.1, 1.0]);
        let m = idx.nearest_human_match(&g, "h").unwrap();
        assert_eq!(m.index, 2);

        let g = unit("g", Component::Reference, 1, vec![0.1, 1.0]);
        assert!(matches!(idx.nearest_human_match(&g, "h"), Err(EmbedError::EmptyHumanSide { .. })));
    }

    #[test]
    fn single_human_unit_always_matches() {
        let mut idx = VectorIndex::new();
        idx.insert(unit("h", Component::Outline, 1, vec![1.0, 0.0])).unwrap();
        let m = idx.nearest_human_match(&unit("g", Component::Outline, 1, vec![-1.0, 0.1]), "h").unwrap();
        assert_eq!(m.index, 1);
        assert!(m.similarity < 0.0);
    }

    #[test]
    fn truncated_index_is_corrupt() {
        let mut idx = VectorIndex::new();
        idx.insert(unit("h", Component::Outline, 1, vec![1.0, 2.0])).unwrap();
        idx.insert(unit("h", Component::Outline, 2, vec![2.0, 1.0])).unwrap();
        let bytes = idx.to_bytes();
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(VectorIndex::from_bytes(cut), Err(EmbedError::CorruptIndex(_))));
        assert!(matches!(VectorIndex::from_bytes(b""), Err(EmbedError::CorruptIndex(_))));
        assert_eq!(idx.to_bytes(), idx.clone().to_bytes());
    }

    #[test]
    fn missing_index_file() {
        assert!(matches!(VectorIndex::load(Path::new("/nonexistent/idx")), Err(EmbedError::MissingFile(_))));
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 8)) {
            prop_assume!(l2_norm(&a) > 1e-6 && l2_norm(&b) > 1e-6);
            let ab = cosine(&a, &b).unwrap();
            let ba = cosine(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn index_round_trip_is_bit_exact(vectors in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 5), 1..12)) {
            let mut idx = VectorIndex::new();
            for (i, v) in vectors.into_iter().enumerate() {
                prop_assume!(l2_norm(&v) > 1e-9);
                idx.insert(unit("s", Component::Reference, i + 1, v)).unwrap();
            }
            let back = VectorIndex::from_bytes(&idx.to_bytes()).unwrap();
            prop_assert_eq!(back.len(), idx.len());
            for (a, b) in idx.units().zip(back.units()) {
                let abits: Vec<u64> = a.vector.iter().map(|x| x.to_bits()).collect();
                let bbits: Vec<u64> = b.vector.iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(abits, bbits);
            }
            prop_assert_eq!(back.to_bytes(), idx.to_bytes());
        }
    }
}
