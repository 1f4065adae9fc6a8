//! Python bindings. Scalars and flat lists cross the boundary natively;
//! nested records (decompositions, reports, arena results) cross as JSON
//! text, which the caller can `json.loads`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use surveyeval::config::PipelineConfig as CoreConfig;
use surveyeval::corpus::load_manifest;
use surveyeval::decompose as core_decompose;
use surveyeval::embedkit::{self, Component};
use surveyeval::metrics::{self, MetricId, MetricScore};
use surveyeval::pipeline::{Pipeline as CorePipeline, PipelineError};
use surveyeval::providers::mock;
use surveyeval::report::{render_markdown, EvaluationReport as CoreReport};
use surveyeval::simweight;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn metric(name: &str) -> PyResult<MetricId> {
    name.parse().map_err(value_err)
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(value_err)
}

/// Display normalization of a raw metric value: percent metrics divide by 20.
#[pyfunction]
fn normalize_score(metric_id: &str, raw: f64) -> PyResult<f64> {
    Ok(metrics::normalize_score(raw, metric(metric_id)?.scale()))
}

/// Report cell text, e.g. `4.68_{93.57}` for a percent metric.
#[pyfunction]
fn format_cell(metric_id: &str, raw: f64) -> PyResult<String> {
    Ok(metrics::format_cell(raw, metric(metric_id)?.scale()))
}

#[pyfunction]
fn node_weight(depth: usize, max_depth: usize) -> PyResult<f64> {
    metrics::node_weight(depth, max_depth).map_err(value_err)
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    embedkit::cosine(&a, &b).map_err(value_err)
}

/// Returns `(sigma, values_used)`.
#[pyfunction]
fn sigma_from_cosines(cosines: Vec<f64>, top_n: usize) -> PyResult<(f64, usize)> {
    simweight::sigma_from_cosines(&cosines, top_n).map_err(value_err)
}

#[pyfunction]
fn fuse_human_as_perfect(metric_id: &str, raw: f64, sigma: f64) -> PyResult<f64> {
    let score = MetricScore::new(metric(metric_id)?, raw).map_err(value_err)?;
    Ok(simweight::fuse_human_as_perfect(&score, sigma).value.expect("defined"))
}

#[pyfunction]
fn fuse_balanced(metric_id: &str, raw: f64, human_raw: f64, sigma: f64) -> PyResult<f64> {
    let id = metric(metric_id)?;
    let system = MetricScore::new(id, raw).map_err(value_err)?;
    let human = MetricScore::new(id, human_raw).map_err(value_err)?;
    Ok(simweight::fuse_balanced(&system, &human, sigma).map_err(value_err)?.value.expect("defined"))
}

#[pyfunction]
#[pyo3(signature = (text, seed, dimension = mock::DEFAULT_DIMENSION))]
fn mock_embed(text: &str, seed: u64, dimension: usize) -> Vec<f64> {
    mock::mock_embed(text, seed, dimension)
}

#[pyfunction]
fn segment_sentences(text: &str) -> Vec<String> {
    core_decompose::segment_sentences(text).into_iter().map(str::to_string).collect()
}

#[pyfunction]
fn citation_keys(sentence: &str) -> Vec<u32> {
    core_decompose::citation_keys(sentence)
}

/// A decomposed survey document.
#[pyclass(frozen)]
struct Decomposition {
    inner: core_decompose::Decomposition,
}

#[pymethods]
impl Decomposition {
    #[getter]
    fn outline_node_count(&self) -> usize {
        self.inner.outline.node_count()
    }

    #[getter]
    fn max_depth(&self) -> usize {
        self.inner.outline.max_depth
    }

    /// Rendered text of each outline-path document.
    #[getter]
    fn outline_paths(&self) -> Vec<String> {
        self.inner.outline_paths.iter().map(|d| d.rendered_text.clone()).collect()
    }

    #[getter]
    fn section_titles(&self) -> Vec<String> {
        self.inner.sections.iter().map(|s| s.title().to_string()).collect()
    }

    /// `(key, text)` per bibliography entry.
    #[getter]
    fn references(&self) -> Vec<(u32, String)> {
        self.inner.references.iter().map(|r| (r.key, r.text.clone())).collect()
    }

    #[getter]
    fn citation_count(&self) -> usize {
        self.inner.citations.len()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn audit(&self) -> Vec<String> {
        core_decompose::audit(&self.inner)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }
}

#[pyfunction]
fn decompose(text: &str) -> PyResult<Decomposition> {
    core_decompose::decompose(text).map(|inner| Decomposition { inner }).map_err(value_err)
}

/// A stored evaluation report.
#[pyclass(frozen)]
struct EvaluationReport {
    inner: CoreReport,
}

#[pymethods]
impl EvaluationReport {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreReport::from_json(text).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_markdown(&self) -> String {
        render_markdown(&self.inner)
    }

    #[getter]
    fn survey_ids(&self) -> Vec<String> {
        self.inner.surveys.iter().map(|s| s.survey_id.clone()).collect()
    }

    #[getter]
    fn config_digest(&self) -> String {
        self.inner.config_digest.clone()
    }

    /// `(outline, content, reference)` σ for a survey; `None` where undefined.
    fn sigmas(&self, survey_id: &str) -> PyResult<(Option<f64>, Option<f64>, Option<f64>)> {
        let s = self.inner.survey(survey_id).ok_or_else(|| value_err(format!("unknown survey '{survey_id}'")))?;
        Ok((s.sigmas.get(Component::Outline), s.sigmas.get(Component::Content), s.sigmas.get(Component::Reference)))
    }

    /// Raw value of a metric under `vanilla`, `balanced` or `human_as_perfect`.
    fn value(&self, survey_id: &str, metric_id: &str, config: &str) -> PyResult<Option<f64>> {
        let s = self.inner.survey(survey_id).ok_or_else(|| value_err(format!("unknown survey '{survey_id}'")))?;
        let config: simweight::Configuration =
            serde_json::from_value(serde_json::Value::String(config.into())).map_err(value_err)?;
        Ok(s.fused(config, metric(metric_id)?))
    }
}

/// The full pipeline over one corpus manifest.
#[pyclass(frozen)]
struct Pipeline {
    inner: CorePipeline,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (manifest, config = None, out = None, offline = false))]
    fn new(manifest: PathBuf, config: Option<PathBuf>, out: Option<PathBuf>, offline: bool) -> PyResult<Self> {
        let mut cfg = match config {
            Some(p) => CoreConfig::load(&p).map_err(value_err)?,
            None => CoreConfig::default(),
        };
        if let Some(out) = out {
            if cfg.paths.cache.is_relative() {
                cfg.paths.cache = out.join(&cfg.paths.cache);
            }
            if cfg.paths.index.is_relative() {
                cfg.paths.index = out.join(&cfg.paths.index);
            }
            cfg.paths.out = out;
        }
        let manifest = load_manifest(&manifest).map_err(value_err)?;
        CorePipeline::new(cfg, manifest, offline).map(|inner| Self { inner }).map_err(pipeline_err)
    }

    #[getter]
    fn config_digest(&self) -> String {
        self.inner.config.digest()
    }

    /// Returns the summary line, e.g. `"9 surveys, 6 pairs"`.
    fn ingest(&self) -> PyResult<String> {
        self.inner.ingest().map(|s| s.to_string()).map_err(pipeline_err)
    }

    /// Returns the number of surveys decomposed.
    fn decompose(&self) -> PyResult<usize> {
        self.inner.decompose().map(|r| r.len()).map_err(pipeline_err)
    }

    /// Returns the index digest.
    fn embed(&self) -> PyResult<String> {
        self.inner.embed().map(|s| s.digest).map_err(pipeline_err)
    }

    fn evaluate(&self) -> PyResult<EvaluationReport> {
        self.inner.evaluate().map(|inner| EvaluationReport { inner }).map_err(pipeline_err)
    }

    /// Recomputes the stored report; returns the mismatch descriptions.
    fn verify(&self) -> PyResult<Vec<String>> {
        let outcome = self.inner.verify().map_err(pipeline_err)?;
        Ok(outcome.mismatches.iter().map(|m| format!("{}: {} vs {}", m.field, m.reported, m.recomputed)).collect())
    }

    /// Arena results as JSON.
    fn arena(&self) -> PyResult<String> {
        to_json(&self.inner.arena().map_err(pipeline_err)?)
    }
}

#[pymodule]
fn surveyeval_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize_score, m)?)?;
    m.add_function(wrap_pyfunction!(format_cell, m)?)?;
    m.add_function(wrap_pyfunction!(node_weight, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_from_cosines, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_human_as_perfect, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_balanced, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embed, m)?)?;
    m.add_function(wrap_pyfunction!(segment_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(citation_keys, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_class::<Decomposition>()?;
    m.add_class::<EvaluationReport>()?;
    m.add_class::<Pipeline>()?;
    Ok(())
}
