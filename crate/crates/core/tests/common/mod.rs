#![allow(dead_code)]

use std::path::{Path, PathBuf};

use surveyeval::config::PipelineConfig;
use surveyeval::corpus::load_manifest;
use surveyeval::pipeline::Pipeline;

pub fn testdata() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata")
}

pub fn toy_manifest() -> PathBuf {
    testdata().join("toy/manifest.json")
}

/// Mock-provider config with every path under `out`.
pub fn config_in(out: &Path, seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig { seed, ..PipelineConfig::default() };
    c.paths.cache = out.join("cache/judge.jsonl");
    c.paths.index = out.join("index/vectors.jsonl");
    c.paths.out = out.to_path_buf();
    c
}

pub fn pipeline(manifest: &Path, out: &Path, seed: u64) -> Pipeline {
    Pipeline::new(config_in(out, seed), load_manifest(manifest).unwrap(), false).unwrap()
}

/// Runs ingest, decompose, embed and evaluate.
pub fn run_all(p: &Pipeline) {
    p.ingest().unwrap();
    p.decompose().unwrap();
    p.embed().unwrap();
    p.evaluate().unwrap();
}
