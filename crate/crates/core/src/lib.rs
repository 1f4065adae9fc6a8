//! Evaluation pipeline for machine-generated academic surveys.
//!
//! Surveys are decomposed into outline, content and reference units, scored
//! by LLM judges, and then pulled toward a paired human-written survey by an
//! embedding similarity factor.

pub mod arena;
pub mod config;
pub mod corpus;
pub mod decompose;
pub mod embedkit;
pub mod judgekit;
pub mod metrics;
pub mod pipeline;
pub mod providers;
pub mod report;
pub mod simweight;

pub use config::PipelineConfig;
pub use corpus::{CorpusManifest, ManifestEntry, Role, SurveyRecord};
pub use decompose::{decompose, Decomposition, OutlineTree};
pub use embedkit::{cosine, Component, EmbeddingProvider, EmbeddingUnit, VectorIndex};
pub use judgekit::{Judge, JudgeCache, JudgeProvider, TemplateRegistry};
pub use metrics::{format_cell, normalize_score, MetricId, MetricScore, MetricSet, Scale};
pub use pipeline::{Pipeline, PipelineError};
pub use report::EvaluationReport;
pub use simweight::{evaluate_configurations, Configuration, FusedScore, SimilarityFactor};
