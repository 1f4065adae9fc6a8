//! Similarity factors against the paired human survey and the two fusion
//! schemes built on them.
//!
//! For each facet, every generated unit is matched to its most similar human
//! unit; the factor σ is the mean of the top-N of those best cosines (each
//! clamped to [0, 1]). Fusion then pulls a metric toward an anchor by σ:
//! the scale maximum (human-as-perfect) or the human survey's own score
//! (balanced).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedkit::{Component, EmbedError, VectorIndex};
use crate::metrics::{MetricId, MetricScore, MetricSet};

pub const DEFAULT_TOP_N_OUTLINE: usize = 5;
pub const DEFAULT_TOP_N_CONTENT: usize = 5;
pub const DEFAULT_TOP_N_REFERENCE: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("no {component} units on the {side} side")]
    EmptySide { component: Component, side: &'static str },
    #[error("scale mismatch: {system} vs {human}")]
    ScaleMismatch { system: MetricId, human: MetricId },
    #[error("top-N must be at least 1")]
    InvalidTopN,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitMatch {
    pub generated_index: usize,
    pub human_index: usize,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFactor {
    pub component: Component,
    pub sigma: f64,
    pub top_n_used: usize,
    pub per_unit_matches: Vec<UnitMatch>,
}

/// Mean of the `n` largest values after clamping each to [0, 1]; returns the
/// mean and how many values it used.
pub fn sigma_from_cosines(cosines: &[f64], n: usize) -> Result<(f64, usize), SimError> {
    if n == 0 {
        return Err(SimError::InvalidTopN);
    }
    let mut clamped: Vec<f64> = cosines.iter().map(|c| c.clamp(0.0, 1.0)).collect();
    clamped.sort_by(|a, b| b.total_cmp(a));
    let used = n.min(clamped.len());
    if used == 0 {
        return Ok((0.0, 0));
    }
    let sum: f64 = clamped[..used].iter().sum();
    Ok((sum / used as f64, used))
}

/// σ for one facet of a generated survey against its human counterpart,
/// both already in `index`.
pub fn similarity_factor(
    index: &VectorIndex,
    generated_survey_id: &str,
    human_survey_id: &str,
    component: Component,
    top_n: usize,
) -> Result<SimilarityFactor, SimError> {
    if index.count(generated_survey_id, component) == 0 {
        return Err(SimError::EmptySide { component, side: "generated" });
    }
    if index.count(human_survey_id, component) == 0 {
        return Err(SimError::EmptySide { component, side: "human" });
    }
    let per_unit_matches = index
        .survey_units(generated_survey_id, component)
        .map(|unit| {
            let m = index.nearest_human_match(unit, human_survey_id)?;
            Ok(UnitMatch { generated_index: unit.index, human_index: m.index, cosine: m.similarity })
        })
        .collect::<Result<Vec<_>, EmbedError>>()?;
    let cosines: Vec<f64> = per_unit_matches.iter().map(|m| m.cosine).collect();
    let (sigma, top_n_used) = sigma_from_cosines(&cosines, top_n)?;
    Ok(SimilarityFactor { component, sigma, top_n_used, per_unit_matches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    Vanilla,
    Balanced,
    HumanAsPerfect,
}

impl Configuration {
    pub const ALL: [Configuration; 3] =
        [Configuration::Vanilla, Configuration::Balanced, Configuration::HumanAsPerfect];

    pub fn label(self) -> &'static str {
        match self {
            Configuration::Vanilla => "Vanilla",
            Configuration::Balanced => "Balanced",
            Configuration::HumanAsPerfect => "Human-as-Perfect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedScore {
    pub config: Configuration,
    pub metric_id: MetricId,
    /// On the metric's own scale; null when the configuration is undefined.
    pub value: Option<f64>,
    pub sigma_used: Option<f64>,
    pub human_value: Option<f64>,
}

/// `σ·Q_max + (1−σ)·Q` where `Q_max` is the top of the metric's scale.
pub fn fuse_human_as_perfect(system: &MetricScore, sigma: f64) -> FusedScore {
    let q_max = system.scale.max();
    FusedScore {
        config: Configuration::HumanAsPerfect,
        metric_id: system.metric_id,
        value: Some(sigma * q_max + (1.0 - sigma) * system.raw),
        sigma_used: Some(sigma),
        human_value: None,
    }
}

/// `σ·Q_human + (1−σ)·Q`.
pub fn fuse_balanced(system: &MetricScore, human: &MetricScore, sigma: f64) -> Result<FusedScore, SimError> {
    if system.metric_id != human.metric_id || system.scale != human.scale {
        return Err(SimError::ScaleMismatch { system: system.metric_id, human: human.metric_id });
    }
    Ok(FusedScore {
        config: Configuration::Balanced,
        metric_id: system.metric_id,
        value: Some(sigma * human.raw + (1.0 - sigma) * system.raw),
        sigma_used: Some(sigma),
        human_value: Some(human.raw),
    })
}

/// σ per facet; `None` where it is undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sigmas {
    pub outline: Option<f64>,
    pub content: Option<f64>,
    pub reference: Option<f64>,
}

impl Sigmas {
    pub fn get(&self, component: Component) -> Option<f64> {
        match component {
            Component::Outline => self.outline,
            Component::Content => self.content,
            Component::Reference => self.reference,
        }
    }

    pub fn set(&mut self, component: Component, sigma: Option<f64>) {
        match component {
            Component::Outline => self.outline = sigma,
            Component::Content => self.content = sigma,
            Component::Reference => self.reference = sigma,
        }
    }
}

/// All three configurations for every metric, in metric order. Each metric
/// uses its own facet's σ. Balanced needs the human score; both fused
/// configurations need σ.
pub fn evaluate_configurations(system: &MetricSet, human: Option<&MetricSet>, sigmas: &Sigmas) -> Vec<FusedScore> {
    let mut out = Vec::with_capacity(MetricId::ALL.len() * 3);
    for id in MetricId::ALL {
        let score = system.get(id);
        let sigma = sigmas.get(id.facet());
        let human_score = human.and_then(|h| h.get(id));
        let null = |config| FusedScore { config, metric_id: id, value: None, sigma_used: None, human_value: None };

        out.push(match score {
            Some(s) => FusedScore { value: Some(s.raw), ..null(Configuration::Vanilla) },
            None => null(Configuration::Vanilla),
        });
        out.push(match (score, human_score, sigma) {
            (Some(s), Some(h), Some(sigma)) => fuse_balanced(s, h, sigma).expect("same metric id"),
            _ => null(Configuration::Balanced),
        });
        out.push(match (score, sigma) {
            (Some(s), Some(sigma)) => fuse_human_as_perfect(s, sigma),
            _ => null(Configuration::HumanAsPerfect),
        });
    }
    out
}
