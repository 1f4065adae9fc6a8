//! Evaluation reports: per-survey scores under every configuration, corpus
//! summaries, markdown rendering, and the audit that recomputes a stored
//! report from verdict logs and the vector index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Role;
use crate::embedkit::{cosine, Component, VectorIndex};
use crate::metrics::{format_cell, normalize_score, round2, MetricId, MetricScore, MetricSet, Scale, SurveyVerdictLog};
use crate::simweight::{Configuration, FusedScore, Sigmas, SimilarityFactor};

pub const REPORT_FORMAT: &str = "surveyeval-report";
pub const REPORT_VERSION: &str = "v1";
pub const AVG_RULE: &str = "artifact-defined: unweighted mean of the non-null normalized metric means";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub survey_id: String,
    pub system: String,
    pub role: Role,
    pub topic: String,
    /// Paired human survey; null for human surveys.
    pub human_id: Option<String>,
    /// Non-null metrics in column order.
    pub metrics: Vec<MetricScore>,
    pub similarity: Vec<SimilarityFactor>,
    pub sigmas: Sigmas,
    pub configurations: Vec<FusedScore>,
    pub warnings: Vec<String>,
}

impl SurveyReport {
    pub fn fused(&self, config: Configuration, metric: MetricId) -> Option<f64> {
        self.configurations.iter().find(|f| f.config == config && f.metric_id == metric).and_then(|f| f.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub metric_id: MetricId,
    pub scale: Scale,
    /// Mean over the system's surveys with a value; null when none has one.
    pub mean_raw: Option<f64>,
    pub normalized: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub system: String,
    pub config: Configuration,
    pub surveys: usize,
    pub cells: Vec<SummaryCell>,
    pub avg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub version: String,
    pub corpus_id: String,
    pub config_digest: String,
    pub cache_digest: String,
    pub index_digest: String,
    pub avg_rule: String,
    pub surveys: Vec<SurveyReport>,
    pub systems: Vec<SystemSummary>,
}

impl EvaluationReport {
    pub fn new(
        corpus_id: &str,
        config_digest: String,
        cache_digest: String,
        index_digest: String,
        mut surveys: Vec<SurveyReport>,
    ) -> Self {
        surveys.sort_by(|a, b| a.survey_id.cmp(&b.survey_id));
        let systems = summarize(&surveys);
        Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION.into(),
            corpus_id: corpus_id.into(),
            config_digest,
            cache_digest,
            index_digest,
            avg_rule: AVG_RULE.into(),
            surveys,
            systems,
        }
    }

    pub fn survey(&self, id: &str) -> Option<&SurveyReport> {
        self.surveys.iter().find(|s| s.survey_id == id)
    }

    pub fn system(&self, system: &str, config: Configuration) -> Option<&SystemSummary> {
        self.systems.iter().find(|s| s.system == system && s.config == config)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-system, per-configuration means over the surveys (already sorted by
/// id, which fixes summation order).
pub fn summarize(surveys: &[SurveyReport]) -> Vec<SystemSummary> {
    let mut by_system: BTreeMap<&str, Vec<&SurveyReport>> = BTreeMap::new();
    for s in surveys {
        by_system.entry(s.system.as_str()).or_default().push(s);
    }
    let mut out = Vec::new();
    for (system, members) in by_system {
        for config in Configuration::ALL {
            let cells: Vec<SummaryCell> = MetricId::ALL
                .into_iter()
                .map(|id| {
                    let values: Vec<f64> = members.iter().filter_map(|s| s.fused(config, id)).collect();
                    let mean_raw = mean(&values);
                    SummaryCell {
                        metric_id: id,
                        scale: id.scale(),
                        mean_raw,
                        normalized: mean_raw.map(|m| normalize_score(m, id.scale())),
                        count: values.len(),
                    }
                })
                .collect();
            let normalized: Vec<f64> = cells.iter().filter_map(|c| c.normalized).collect();
            out.push(SystemSummary {
                system: system.to_string(),
                config,
                surveys: members.len(),
                avg: mean(&normalized),
                cells,
            });
        }
    }
    out
}

fn facet_label(c: Component) -> &'static str {
    match c {
        Component::Outline => "Outline",
        Component::Content => "Content",
        Component::Reference => "Reference",
    }
}

/// Display convention: five-point cells to 2 decimals, percent cells as
/// `normalized_{raw}`, missing cells as a dash.
pub fn render_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Evaluation report: {}\n\n", report.corpus_id));
    out.push_str(&format!(
        "config `{}`  \ncache `{}`  \nindex `{}`\n\n",
        report.config_digest, report.cache_digest, report.index_digest
    ));
    // Judge-score columns share names across facets, so carry the facet.
    let header: Vec<String> = MetricId::ALL
        .iter()
        .map(|m| match m.column() {
            c if c.starts_with('*') => c.to_string(),
            c => format!("{} {c}", facet_label(m.facet())),
        })
        .collect();
    for config in Configuration::ALL {
        out.push_str(&format!("## {}\n\n", config.label()));
        out.push_str(&format!("| System | {} | Avg. |\n", header.join(" | ")));
        out.push_str(&format!("|---|{}---|\n", "---|".repeat(header.len())));
        for s in report.systems.iter().filter(|s| s.config == config) {
            let cells: Vec<String> = s
                .cells
                .iter()
                .map(|c| c.mean_raw.map_or_else(|| "–".to_string(), |m| format_cell(m, c.scale)))
                .collect();
            let avg = s.avg.map_or_else(|| "–".to_string(), |a| format!("{:.2}", round2(a)));
            out.push_str(&format!("| {} | {} | {} |\n", s.system, cells.join(" | "), avg));
        }
        out.push('\n');
    }
    out.push_str(&format!("Avg. is {}.\n\n", report.avg_rule));

    out.push_str("## Similarity factors\n\n| Survey | System | Human | σ outline | σ content | σ reference |\n|---|---|---|---|---|---|\n");
    let sigma = |v: Option<f64>| v.map_or_else(|| "–".to_string(), |x| format!("{:.4}", x));
    for s in report.surveys.iter().filter(|s| s.role == Role::Generated) {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            s.survey_id,
            s.system,
            s.human_id.as_deref().unwrap_or("–"),
            sigma(s.sigmas.outline),
            sigma(s.sigmas.content),
            sigma(s.sigmas.reference)
        ));
    }
    let warned: Vec<&SurveyReport> = report.surveys.iter().filter(|s| !s.warnings.is_empty()).collect();
    if !warned.is_empty() {
        out.push_str("\n## Warnings\n\n");
        for s in warned {
            for w in &s.warnings {
                out.push_str(&format!("- {}: {}\n", s.survey_id, w));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Audit

const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub survey_id: Option<String>,
    pub field: String,
    pub reported: String,
    pub recomputed: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyOutcome {
    fn compare(&mut self, survey: Option<&str>, field: String, reported: Option<f64>, recomputed: Option<f64>) {
        self.checked += 1;
        let ok = match (reported, recomputed) {
            (None, None) => true,
            (Some(a), Some(b)) => (a - b).abs() <= TOLERANCE * a.abs().max(b.abs()).max(1.0),
            _ => false,
        };
        if !ok {
            let show = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |x| x.to_string());
            self.mismatches.push(Mismatch {
                survey_id: survey.map(str::to_string),
                field,
                reported: show(reported),
                recomputed: show(recomputed),
            });
        }
    }

    fn compare_text(&mut self, survey: Option<&str>, field: &str, reported: &str, recomputed: &str) {
        self.checked += 1;
        if reported != recomputed {
            self.mismatches.push(Mismatch {
                survey_id: survey.map(str::to_string),
                field: field.to_string(),
                reported: reported.to_string(),
                recomputed: recomputed.to_string(),
            });
        }
    }
}

/// σ by exhaustive search: every generated unit against every human unit,
/// best cosines clamped, sorted, top-`n` averaged.
pub fn brute_force_sigma(
    index: &VectorIndex,
    generated: &str,
    human: &str,
    component: Component,
    n: usize,
) -> Option<f64> {
    let human_units: Vec<_> = index.survey_units(human, component).collect();
    let mut best: Vec<f64> = Vec::new();
    for g in index.survey_units(generated, component) {
        let m = human_units
            .iter()
            .map(|h| cosine(&g.vector, &h.vector).expect("index dimensions agree"))
            .fold(f64::NEG_INFINITY, f64::max);
        best.push(m.clamp(0.0, 1.0));
    }
    if best.is_empty() || human_units.is_empty() {
        return None;
    }
    best.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    best.truncate(n);
    Some(best.iter().sum::<f64>() / best.len() as f64)
}

/// Recomputes every value in `report` from the verdict logs, the index and
/// the fusion formulas, and lists the disagreements.
pub fn verify_report(
    report: &EvaluationReport,
    logs: &BTreeMap<String, SurveyVerdictLog>,
    index: &VectorIndex,
    top_n: impl Fn(Component) -> usize,
    config_digest: &str,
) -> VerifyOutcome {
    let mut v = VerifyOutcome::default();
    v.compare_text(None, "config_digest", &report.config_digest, config_digest);
    v.compare_text(None, "index_digest", &report.index_digest, &index.digest());

    let mut recounted: BTreeMap<&str, MetricSet> = BTreeMap::new();
    for s in &report.surveys {
        match logs.get(&s.survey_id).map(|l| l.metrics()) {
            Some(Ok(set)) => {
                recounted.insert(&s.survey_id, set);
            }
            Some(Err(e)) => v.compare_text(Some(&s.survey_id), "verdict log", "valid", &e.to_string()),
            None => v.compare_text(Some(&s.survey_id), "verdict log", "present", "missing"),
        }
    }

    for s in &report.surveys {
        let id = s.survey_id.as_str();
        let Some(set) = recounted.get(id) else { continue };
        for m in MetricId::ALL {
            let reported = s.metrics.iter().find(|x| x.metric_id == m);
            v.compare(Some(id), format!("metric {m}"), reported.map(|x| x.raw), set.get(m).map(|x| x.raw));
            v.compare(
                Some(id),
                format!("normalized {m}"),
                reported.map(|x| x.normalized),
                set.get(m).map(|x| normalize_score(x.raw, m.scale())),
            );
        }

        let mut sigmas = Sigmas::default();
        if let Some(h) = &s.human_id {
            for c in Component::ALL {
                sigmas.set(c, brute_force_sigma(index, id, h, c, top_n(c)));
                v.compare(Some(id), format!("sigma {c}"), s.sigmas.get(c), sigmas.get(c));
            }
            for f in &s.similarity {
                let humans: Vec<_> = index.survey_units(h, f.component).collect();
                for m in &f.per_unit_matches {
                    let key_ok =
                        index.survey_units(id, f.component).find(|u| u.index == m.generated_index).and_then(|g| {
                            let best = humans
                                .iter()
                                .map(|u| cosine(&g.vector, &u.vector).ok())
                                .collect::<Option<Vec<f64>>>()?;
                            let top = best.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            let matched = humans.iter().position(|u| u.index == m.human_index)?;
                            Some((top, best[matched]))
                        });
                    let field = format!("match {} {}", f.component, m.generated_index);
                    match key_ok {
                        Some((top, matched)) => {
                            v.compare(Some(id), format!("{field} cosine"), Some(m.cosine), Some(top));
                            v.compare(Some(id), format!("{field} argmax"), Some(matched), Some(top));
                        }
                        None => v.compare_text(Some(id), &field, "resolvable", "unknown unit"),
                    }
                }
            }
        }

        let human_set = s.human_id.as_deref().and_then(|h| recounted.get(h));
        for m in MetricId::ALL {
            let q = set.get(m).map(|x| x.raw);
            let sigma = sigmas.get(m.facet());
            let q_human = human_set.and_then(|h| h.get(m)).map(|x| x.raw);
            let expected = [
                (Configuration::Vanilla, q),
                (Configuration::Balanced, q.zip(q_human).zip(sigma).map(|((q, qh), s)| s * qh + (1.0 - s) * q)),
                (Configuration::HumanAsPerfect, q.zip(sigma).map(|(q, s)| s * m.scale().max() + (1.0 - s) * q)),
            ];
            for (config, value) in expected {
                v.compare(Some(id), format!("{} {m}", config.label()), s.fused(config, m), value);
            }
        }
    }

    // Corpus summaries from the per-survey values.
    for summary in &report.systems {
        let members: Vec<&SurveyReport> = report.surveys.iter().filter(|s| s.system == summary.system).collect();
        let mut normalized = Vec::new();
        for cell in &summary.cells {
            let values: Vec<f64> = members.iter().filter_map(|s| s.fused(summary.config, cell.metric_id)).collect();
            let m = mean(&values);
            if let Some(x) = m {
                normalized.push(normalize_score(x, cell.metric_id.scale()));
            }
            let field = format!("{} {} {}", summary.system, summary.config.label(), cell.metric_id);
            v.compare(None, format!("mean {field}"), cell.mean_raw, m);
        }
        v.compare(None, format!("avg {} {}", summary.system, summary.config.label()), summary.avg, mean(&normalized));
    }
    v
}
