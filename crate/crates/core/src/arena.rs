//! Pairwise win rates of generated surveys against their human counterparts.
//!
//! Every (pair, judge) cell makes two forced-choice calls with the candidate
//! order swapped, so a judge that always prefers one position scores exactly
//! 0.5.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedkit::Component;
use crate::judgekit::{Judge, JudgeError, Side};

/// One comparison: generated and human renderings of the same facet.
#[derive(Debug, Clone, PartialEq)]
pub struct ArenaPair {
    pub generated_id: String,
    pub human_id: String,
    pub topic: String,
    pub generated: String,
    pub human: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeTally {
    pub wins: usize,
    pub decisions: usize,
    pub failures: usize,
    /// Null when every call failed.
    pub win_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaResult {
    pub system: String,
    pub dimension: Component,
    pub per_judge: BTreeMap<String, JudgeTally>,
    pub mean: f64,
    /// Population standard deviation across judges.
    pub std: f64,
    pub decisions: usize,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ArenaError {
    #[error("arena needs at least one pair")]
    NoPairs,
    #[error("arena needs at least one judge")]
    NoJudges,
    #[error("no judge produced a decision")]
    NoDecisions,
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the order-swapped protocol. Unparseable verdicts are excluded from
/// the denominator with a diagnostic; provider errors abort.
pub fn run_arena(
    system: &str,
    dimension: Component,
    pairs: &[ArenaPair],
    judges: &[(String, Judge<'_>)],
) -> Result<ArenaResult, ArenaError> {
    if pairs.is_empty() {
        return Err(ArenaError::NoPairs);
    }
    if judges.is_empty() {
        return Err(ArenaError::NoJudges);
    }
    let mut per_judge = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (judge_id, judge) in judges {
        let mut tally = JudgeTally::default();
        for pair in pairs {
            // Generated first, then human first.
            let orders = [
                (pair.generated.as_str(), pair.human.as_str(), Side::A),
                (pair.human.as_str(), pair.generated.as_str(), Side::B),
            ];
            for (a, b, generated_side) in orders {
                match judge.pairwise(dimension, &pair.topic, a, b) {
                    Ok(winner) => {
                        tally.decisions += 1;
                        if winner == generated_side {
                            tally.wins += 1;
                        }
                    }
                    Err(e @ JudgeError::UnparseableVerdict { .. }) => {
                        tally.failures += 1;
                        diagnostics.push(format!("{judge_id} on {} vs {}: {e}", pair.generated_id, pair.human_id));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        tally.win_rate = (tally.decisions > 0).then(|| tally.wins as f64 / tally.decisions as f64);
        per_judge.insert(judge_id.clone(), tally);
    }
    let rates: Vec<f64> = per_judge.values().filter_map(|t| t.win_rate).collect();
    if rates.is_empty() {
        return Err(ArenaError::NoDecisions);
    }
    let (mean, std) = mean_and_std(&rates);
    Ok(ArenaResult {
        system: system.to_string(),
        dimension,
        decisions: per_judge.values().map(|t| t.decisions).sum(),
        failures: per_judge.values().map(|t| t.failures).sum(),
        per_judge,
        mean,
        std,
        diagnostics,
    })
}

/// Systems as rows, facets as columns, cells as `mean_{±std}`.
pub fn render_markdown(results: &[ArenaResult]) -> String {
    let mut rows: BTreeMap<&str, BTreeMap<Component, &ArenaResult>> = BTreeMap::new();
    for r in results {
        rows.entry(r.system.as_str()).or_default().insert(r.dimension, r);
    }
    let mut out = String::from("| System | Outline | Content | Reference |\n|---|---|---|---|\n");
    for (system, cells) in rows {
        out.push_str(&format!("| {system} |"));
        for c in Component::ALL {
            match cells.get(&c) {
                Some(r) => out.push_str(&format!(" {:.2}_{{±{:.2}}} |", r.mean, r.std)),
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
    out
}
