//! Judge and embedding provider implementations: HTTP clients for live
//! models and deterministic mocks for offline runs.

pub mod http;
pub mod mock;

pub use http::{HttpEmbedder, HttpJudge};
pub use mock::{MockEmbedder, MockJudge, MockScript, ScriptedVerdict};
