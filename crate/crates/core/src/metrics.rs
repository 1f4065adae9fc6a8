//! Facet metrics: depth-weighted outline hierarchy, citation faithfulness,
//! reference supportiveness, the judge's quality scores, and the 0–5 display
//! normalization shared by all of them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SurveyRecord;
use crate::decompose::{render_outline, CitationSentence, OutlineTree, ReferenceEntry};
use crate::embedkit::Component;
use crate::judgekit::{Judge, JudgeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("depth {depth} exceeds maximum depth {max_depth}")]
    InvalidDepth { depth: usize, max_depth: usize },
    #[error("{metric}: raw value {raw} outside the {scale} range")]
    OutOfRange { metric: MetricId, raw: f64, scale: Scale },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 0–5 judge scores.
    FivePoint,
    /// 0–100 percentages.
    Percent,
}

impl Scale {
    pub fn max(self) -> f64 {
        match self {
            Scale::FivePoint => 5.0,
            Scale::Percent => 100.0,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::FivePoint => "five_point",
            Scale::Percent => "percent",
        })
    }
}

/// Reported metrics, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    OutlineQuality,
    Hierarchy,
    ContentCoverage,
    ContentStructure,
    ContentRelevance,
    ContentLanguage,
    ContentCriticalness,
    Faithfulness,
    ReferenceQuality,
    Supportiveness,
}

impl MetricId {
    pub const ALL: [MetricId; 10] = [
        MetricId::OutlineQuality,
        MetricId::Hierarchy,
        MetricId::ContentCoverage,
        MetricId::ContentStructure,
        MetricId::ContentRelevance,
        MetricId::ContentLanguage,
        MetricId::ContentCriticalness,
        MetricId::Faithfulness,
        MetricId::ReferenceQuality,
        MetricId::Supportiveness,
    ];

    pub const CONTENT: [MetricId; 5] = [
        MetricId::ContentCoverage,
        MetricId::ContentStructure,
        MetricId::ContentRelevance,
        MetricId::ContentLanguage,
        MetricId::ContentCriticalness,
    ];

    pub fn facet(self) -> Component {
        match self {
            MetricId::OutlineQuality | MetricId::Hierarchy => Component::Outline,
            MetricId::ReferenceQuality | MetricId::Supportiveness => Component::Reference,
            _ => Component::Content,
        }
    }

    pub fn scale(self) -> Scale {
        match self {
            MetricId::Hierarchy | MetricId::Faithfulness | MetricId::Supportiveness => Scale::Percent,
            _ => Scale::FivePoint,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::OutlineQuality => "outline_quality",
            MetricId::Hierarchy => "hierarchy",
            MetricId::ContentCoverage => "content_coverage",
            MetricId::ContentStructure => "content_structure",
            MetricId::ContentRelevance => "content_relevance",
            MetricId::ContentLanguage => "content_language",
            MetricId::ContentCriticalness => "content_criticalness",
            MetricId::Faithfulness => "faithfulness",
            MetricId::ReferenceQuality => "reference_quality",
            MetricId::Supportiveness => "supportiveness",
        }
    }

    /// Short column header (`L1`..`L5` for judge scores).
    pub fn column(self) -> &'static str {
        match self {
            MetricId::OutlineQuality | MetricId::ContentCoverage | MetricId::ReferenceQuality => "L1",
            MetricId::ContentStructure => "L2",
            MetricId::ContentRelevance => "L3",
            MetricId::ContentLanguage => "L4",
            MetricId::ContentCriticalness => "L5",
            MetricId::Hierarchy => "*Hierarchy",
            MetricId::Faithfulness => "*Faithfulness",
            MetricId::Supportiveness => "*Supportiveness",
        }
    }
}

impl std::str::FromStr for MetricId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric_id: MetricId,
    pub scale: Scale,
    pub raw: f64,
    pub normalized: f64,
}

impl MetricScore {
    pub fn new(metric_id: MetricId, raw: f64) -> Result<Self, MetricError> {
        let scale = metric_id.scale();
        if !(0.0..=scale.max()).contains(&raw) {
            return Err(MetricError::OutOfRange { metric: metric_id, raw, scale });
        }
        Ok(Self { metric_id, scale, raw, normalized: normalize_score(raw, scale) })
    }
}

/// Maps a raw value onto the 0–5 scale at full precision.
pub fn normalize_score(raw: f64, scale: Scale) -> f64 {
    match scale {
        Scale::FivePoint => raw,
        Scale::Percent => raw / 20.0,
    }
}

/// Rounds half away from zero to two decimals, absorbing binary
/// representation error (so 2.2295 rounds to 2.23).
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    let cleaned = (scaled * 1e6).round() / 1e6;
    cleaned.round() / 100.0
}

/// Display cell: `4.00` for five-point values, `4.68_{93.57}` for percents.
pub fn format_cell(raw: f64, scale: Scale) -> String {
    match scale {
        Scale::FivePoint => format!("{:.2}", round2(raw)),
        Scale::Percent => format!("{:.2}_{{{:.2}}}", round2(normalize_score(raw, scale)), round2(raw)),
    }
}

/// Weight of a node at `depth`: `(max_depth - depth + 1) / max_depth`. The
/// virtual root (depth 0) gets `(max_depth + 1) / max_depth`.
pub fn node_weight(depth: usize, max_depth: usize) -> Result<f64, MetricError> {
    if depth > max_depth || max_depth == 0 {
        return Err(MetricError::InvalidDepth { depth, max_depth });
    }
    Ok((max_depth - depth + 1) as f64 / max_depth as f64)
}

/// Metric values of one survey; absent metrics are null, never zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet(pub BTreeMap<MetricId, MetricScore>);

impl MetricSet {
    pub fn get(&self, id: MetricId) -> Option<&MetricScore> {
        self.0.get(&id)
    }

    pub fn insert(&mut self, score: MetricScore) {
        self.0.insert(score.metric_id, score);
    }

    pub fn iter(&self) -> impl Iterator<Item = &MetricScore> {
        self.0.values()
    }
}

// ---------------------------------------------------------------------------
// Hierarchy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentRecord {
    pub path: Vec<String>,
    pub depth: usize,
    pub weight: f64,
    pub children: Vec<String>,
    /// Per-child coherence; all false when the judge failed on this node.
    pub verdicts: Vec<bool>,
    pub local_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyBreakdown {
    pub parents: Vec<ParentRecord>,
    pub max_depth: usize,
    /// 0–100.
    pub score: f64,
}

/// Fraction of `true` verdicts.
pub fn local_score(verdicts: &[bool]) -> f64 {
    if verdicts.is_empty() {
        0.0
    } else {
        verdicts.iter().filter(|&&v| v).count() as f64 / verdicts.len() as f64
    }
}

/// `100 · Σ L·w / Σ w` over `(local_score, weight)` pairs.
pub fn weighted_hierarchy(parents: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = parents.into_iter().fold((0.0, 0.0), |(n, d), (l, w)| (n + l * w, d + w));
    if den == 0.0 {
        0.0
    } else {
        100.0 * num / den
    }
}

/// Assembles the breakdown from per-parent verdicts given in
/// [`OutlineTree::for_each_parent`] order. An `Err` fails the node: all its
/// children count as incoherent and the message is kept as a diagnostic.
pub fn hierarchy_from_verdicts(
    tree: &OutlineTree,
    mut verdicts: impl FnMut(&[String], &[String]) -> Result<Vec<bool>, String>,
) -> HierarchyBreakdown {
    let max_depth = tree.max_depth;
    let mut parents = Vec::new();
    tree.for_each_parent(|path, node| {
        let children: Vec<String> = node.children.iter().map(|c| c.title.clone()).collect();
        let weight = node_weight(node.depth, max_depth).expect("tree depths are bounded by max_depth");
        let (verdicts, diagnostic) = match verdicts(path, &children) {
            Ok(v) => (v, None),
            Err(d) => (vec![false; children.len()], Some(d)),
        };
        parents.push(ParentRecord {
            path: path.to_vec(),
            depth: node.depth,
            weight,
            local_score: local_score(&verdicts),
            children,
            verdicts,
            diagnostic,
        });
    });
    let score = weighted_hierarchy(parents.iter().map(|p| (p.local_score, p.weight)));
    HierarchyBreakdown { parents, max_depth, score }
}

/// Judges every parent's children for coherence, the virtual root against
/// the survey topic. An unparseable verdict fails only its node; provider
/// errors abort.
pub fn hierarchy_score(tree: &OutlineTree, topic: &str, judge: &Judge<'_>) -> Result<HierarchyBreakdown, JudgeError> {
    let mut fatal = None;
    let breakdown = hierarchy_from_verdicts(tree, |path, children| {
        if fatal.is_some() {
            return Err("skipped".into());
        }
        match judge.children_coherence(topic, path, children) {
            Ok(v) => Ok(v),
            Err(e @ JudgeError::UnparseableVerdict { .. }) => {
                log::warn!("coherence verdict failed for {:?}: {e}", path);
                Err(e.to_string())
            }
            Err(e) => {
                fatal = Some(e);
                Err("aborted".into())
            }
        }
    });
    match fatal {
        Some(e) => Err(e),
        None => Ok(breakdown),
    }
}

// ---------------------------------------------------------------------------
// Faithfulness and supportiveness

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportRecord {
    pub section_index: usize,
    pub sentence: String,
    pub key: u32,
    pub supported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessBreakdown {
    pub instances: Vec<SupportRecord>,
    pub supported: usize,
    pub total: usize,
    pub unique_cited: usize,
    pub unique_supported: usize,
    /// Null when there are no citation instances.
    pub score: Option<MetricScore>,
}

/// Percentage of supported (sentence, reference) instances.
pub fn faithfulness_from_instances(instances: Vec<SupportRecord>) -> FaithfulnessBreakdown {
    let total = instances.len();
    let supported = instances.iter().filter(|r| r.supported).count();
    let mut cited: BTreeMap<u32, bool> = BTreeMap::new();
    for r in &instances {
        *cited.entry(r.key).or_default() |= r.supported;
    }
    let score = (total > 0).then(|| {
        MetricScore::new(MetricId::Faithfulness, 100.0 * supported as f64 / total as f64).expect("ratio in range")
    });
    FaithfulnessBreakdown {
        instances,
        supported,
        total,
        unique_cited: cited.len(),
        unique_supported: cited.values().filter(|&&s| s).count(),
        score,
    }
}

pub fn faithfulness_score(
    citations: &[CitationSentence],
    references: &[ReferenceEntry],
    judge: &Judge<'_>,
) -> Result<FaithfulnessBreakdown, JudgeError> {
    let by_key: BTreeMap<u32, &ReferenceEntry> = references.iter().map(|r| (r.key, r)).collect();
    let mut instances = Vec::new();
    for c in citations {
        let keys: Vec<u32> = c.cited_keys.iter().copied().filter(|k| by_key.contains_key(k)).collect();
        if keys.is_empty() {
            continue;
        }
        let texts: Vec<String> = keys.iter().map(|k| by_key[k].text.clone()).collect();
        let support = judge.citation_support(&c.sentence, &texts)?;
        for (key, supported) in keys.into_iter().zip(support) {
            instances.push(SupportRecord {
                section_index: c.section_index,
                sentence: c.sentence.clone(),
                key,
                supported,
            });
        }
    }
    Ok(faithfulness_from_instances(instances))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceRecord {
    pub key: u32,
    pub index: usize,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportivenessBreakdown {
    pub records: Vec<RelevanceRecord>,
    pub relevant: usize,
    pub total: usize,
    /// Null for an empty bibliography.
    pub score: Option<MetricScore>,
}

pub fn supportiveness_from_records(records: Vec<RelevanceRecord>) -> SupportivenessBreakdown {
    let total = records.len();
    let relevant = records.iter().filter(|r| r.relevant).count();
    let score = (total > 0).then(|| {
        MetricScore::new(MetricId::Supportiveness, 100.0 * relevant as f64 / total as f64).expect("ratio in range")
    });
    SupportivenessBreakdown { records, relevant, total, score }
}

pub fn supportiveness_score(
    references: &[ReferenceEntry],
    topic: &str,
    judge: &Judge<'_>,
) -> Result<SupportivenessBreakdown, JudgeError> {
    let records = references
        .iter()
        .map(|r| {
            judge.reference_relevance(topic, &r.text, r.index).map(|relevant| RelevanceRecord {
                key: r.key,
                index: r.index,
                relevant,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(supportiveness_from_records(records))
}

// ---------------------------------------------------------------------------
// Whole-survey evaluation

pub fn render_content(record: &SurveyRecord) -> String {
    record
        .parts
        .sections
        .iter()
        .filter(|s| !s.body.is_empty())
        .map(|s| format!("{} {}\n{}", "#".repeat(s.heading_path.len()), s.title(), s.body))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn reference_texts(references: &[ReferenceEntry]) -> Vec<String> {
    references.iter().map(|r| format!("[{}] {}", r.key, r.text)).collect()
}

/// Every judge decision behind one survey's metrics. Serialized as the
/// per-survey verdict log; [`SurveyVerdictLog::metrics`] recomputes all
/// metric values from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyVerdictLog {
    pub survey_id: String,
    pub topic: String,
    pub hierarchy: HierarchyBreakdown,
    pub outline_quality: u8,
    /// Judge scores in [`CONTENT_DIMENSIONS`] order; null without content.
    pub content_quality: Option<[u8; 5]>,
    /// Null without content.
    pub faithfulness: Option<FaithfulnessBreakdown>,
    /// Null without references.
    pub reference_quality: Option<u8>,
    pub supportiveness: Option<SupportivenessBreakdown>,
    pub warnings: Vec<String>,
}

impl SurveyVerdictLog {
    /// Metric values recounted from the logged verdicts. Node weights are
    /// rederived from depths, not read back from the log.
    pub fn metrics(&self) -> Result<MetricSet, MetricError> {
        let mut set = MetricSet::default();
        let max_depth = self.hierarchy.max_depth;
        let parents = self
            .hierarchy
            .parents
            .iter()
            .map(|p| Ok((local_score(&p.verdicts), node_weight(p.depth, max_depth)?)))
            .collect::<Result<Vec<_>, MetricError>>()?;
        set.insert(MetricScore::new(MetricId::Hierarchy, weighted_hierarchy(parents))?);
        set.insert(MetricScore::new(MetricId::OutlineQuality, f64::from(self.outline_quality))?);
        if let Some(scores) = self.content_quality {
            for (id, s) in MetricId::CONTENT.into_iter().zip(scores) {
                set.insert(MetricScore::new(id, f64::from(s))?);
            }
        }
        if let Some(score) =
            self.faithfulness.as_ref().and_then(|f| faithfulness_from_instances(f.instances.clone()).score)
        {
            set.insert(score);
        }
        if let Some(q) = self.reference_quality {
            set.insert(MetricScore::new(MetricId::ReferenceQuality, f64::from(q))?);
        }
        if let Some(score) =
            self.supportiveness.as_ref().and_then(|s| supportiveness_from_records(s.records.clone()).score)
        {
            set.insert(score);
        }
        Ok(set)
    }
}

/// Runs every facet metric on a survey. Facets with nothing to judge are
/// left null with a warning.
pub fn evaluate_survey(record: &SurveyRecord, judge: &Judge<'_>) -> Result<SurveyVerdictLog, JudgeError> {
    let topic = record.entry.topic_label().to_string();
    let parts = &record.parts;
    let mut warnings = Vec::new();

    let hierarchy = hierarchy_score(&parts.outline, &topic, judge)?;
    for p in hierarchy.parents.iter().filter_map(|p| p.diagnostic.as_ref()) {
        warnings.push(format!("hierarchy node failed: {p}"));
    }
    let outline_quality = judge.outline_quality(&topic, &render_outline(&parts.outline))?;

    let (content_quality, faithfulness) = if record.has_content() {
        let scores = judge.content_quality(&topic, &render_content(record))?;
        let f = faithfulness_score(&parts.citations, &parts.references, judge)?;
        if f.score.is_none() {
            warnings.push("no resolvable citation instances; faithfulness is null".into());
        }
        (Some(scores), Some(f))
    } else {
        warnings.push("content facet empty; content metrics are null".into());
        (None, None)
    };

    let (reference_quality, supportiveness) = if record.has_references() {
        let q = judge.reference_quality(&topic, &reference_texts(&parts.references))?;
        (Some(q), Some(supportiveness_score(&parts.references, &topic, judge)?))
    } else {
        warnings.push("reference facet empty; reference metrics are null".into());
        (None, None)
    };

    Ok(SurveyVerdictLog {
        survey_id: record.entry.id.clone(),
        topic,
        hierarchy,
        outline_quality,
        content_quality,
        faithfulness,
        reference_quality,
        supportiveness,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::parse_outline;

    #[test]
    fn weights() {
        assert_eq!(node_weight(1, 3).unwrap(), 1.0);
        assert!((node_weight(3, 3).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert!((node_weight(0, 3).unwrap() - 4.0 / 3.0).abs() < 1e-9);
        assert_eq!(node_weight(4, 3), Err(MetricError::InvalidDepth { depth: 4, max_depth: 3 }));
    }

    #[test]
    fn hand_worked_two_level_tree() {
        // root -> A -> {A1, A2}; root's only child coherent, one of A's two.
        let tree = parse_outline("# A\n## A1\n## A2").unwrap();
        let b = hierarchy_from_verdicts(&tree, |path, children| {
            Ok(if path.is_empty() { vec![true] } else { vec![true, false] }.into_iter().take(children.len()).collect())
        });
        assert_eq!(b.parents.len(), 2);
        assert_eq!(b.parents[0].weight, 1.5);
        assert_eq!(b.parents[1].weight, 1.0);
        assert!((b.score - 80.0).abs() < 1e-9);
    }

    #[test]
    fn all_or_nothing_coherence() {
        let tree = parse_outline("# A\n## A1\n# B\n## B1\n### x").unwrap();
        let all = hierarchy_from_verdicts(&tree, |_, c| Ok(vec![true; c.len()]));
        assert_eq!(all.score, 100.0);
        let none = hierarchy_from_verdicts(&tree, |_, c| Ok(vec![false; c.len()]));
        assert_eq!(none.score, 0.0);
    }

    #[test]
    fn failed_node_scores_zero() {
        let tree = parse_outline("# A\n## A1").unwrap();
        let b = hierarchy_from_verdicts(
            &tree,
            |p, c| if p.is_empty() { Ok(vec![true; c.len()]) } else { Err("bad".into()) },
        );
        assert_eq!(b.parents[1].verdicts, [false]);
        assert_eq!(b.parents[1].diagnostic.as_deref(), Some("bad"));
        // weights: root (2+1)/2 = 1.5, A (2-1+1)/2 = 1.0
        assert!((b.score - 100.0 * 1.5 / 2.5).abs() < 1e-12);
    }

    fn inst(key: u32, supported: bool) -> SupportRecord {
        SupportRecord { section_index: 1, sentence: "s".into(), key, supported }
    }

    #[test]
    fn faithfulness_proportions() {
        let ten: Vec<_> = (0..10).map(|i| inst(i % 4, i < 7)).collect();
        let f = faithfulness_from_instances(ten);
        assert_eq!(f.score.unwrap().raw, 70.0);
        assert_eq!(f.unique_cited, 4);
        assert_eq!(faithfulness_from_instances(vec![inst(1, true); 3]).score.unwrap().raw, 100.0);
        assert!(faithfulness_from_instances(vec![]).score.is_none());
    }

    #[test]
    fn supportiveness_proportions() {
        let recs: Vec<_> =
            (0..20).map(|i| RelevanceRecord { key: i + 1, index: i as usize + 1, relevant: i < 14 }).collect();
        assert_eq!(supportiveness_from_records(recs).score.unwrap().raw, 70.0);
        assert!(supportiveness_from_records(vec![]).score.is_none());
    }

    #[test]
    fn normalization_matches_display_convention() {
        assert_eq!(round2(normalize_score(93.57, Scale::Percent)), 4.68);
        assert_eq!(round2(normalize_score(69.75, Scale::Percent)), 3.49);
        assert_eq!(normalize_score(0.0, Scale::Percent), 0.0);
        assert_eq!(normalize_score(3.7, Scale::FivePoint), 3.7);
        assert_eq!(format_cell(93.57, Scale::Percent), "4.68_{93.57}");
        assert_eq!(format_cell(100.0, Scale::Percent), "5.00_{100.00}");
        assert_eq!(format_cell(4.0, Scale::FivePoint), "4.00");
    }

    #[test]
    fn metric_ids_parse_from_names() {
        for m in MetricId::ALL {
            assert_eq!(m.as_str().parse::<MetricId>(), Ok(m));
        }
        assert!("nope".parse::<MetricId>().is_err());
    }

    #[test]
    fn metric_score_range() {
        assert!(MetricScore::new(MetricId::Hierarchy, 100.5).is_err());
        assert!(MetricScore::new(MetricId::OutlineQuality, 5.5).is_err());
        let s = MetricScore::new(MetricId::Faithfulness, 50.0).unwrap();
        assert_eq!(s.normalized, 2.5);
        assert_eq!(MetricId::Faithfulness.facet(), Component::Content);
        assert_eq!(MetricId::CONTENT.len(), crate::judgekit::CONTENT_DIMENSIONS.len());
    }
}
