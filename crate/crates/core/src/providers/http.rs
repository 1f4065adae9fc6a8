//! Chat-completion and embedding endpoints in the common OpenAI-compatible
//! shape.

use std::time::Duration;

use serde_json::{json, Value};

use crate::embedkit::{EmbedError, EmbeddingProvider};
use crate::judgekit::{JudgeError, JudgeProvider, JudgeRequest};

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into()
}

fn endpoint(base_url: &str, path: &str) -> String {
    format!("{}/{path}", base_url.trim_end_matches('/'))
}

fn post(agent: &ureq::Agent, url: &str, api_key: Option<&str>, body: &Value) -> Result<Value, String> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(|e| format!("{url}: {e}"))?;
    resp.body_mut().read_json::<Value>().map_err(|e| format!("{url}: invalid JSON response: {e}"))
}

pub struct HttpJudge {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpJudge {
    /// The API key is read from `api_key_env` if that variable is set.
    pub fn new(base_url: &str, model: &str, api_key_env: &str, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            base_url: base_url.to_string(),
            model: model.to_string(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
        }
    }
}

impl JudgeProvider for HttpJudge {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        let body = json!({
            "model": self.model,
            "temperature": request.task.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let url = endpoint(&self.base_url, "chat/completions");
        let resp = post(&self.agent, &url, self.api_key.as_deref(), &body).map_err(JudgeError::ProviderUnavailable)?;
        resp.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string).ok_or_else(|| {
            JudgeError::ProviderUnavailable(format!("{url}: response has no choices[0].message.content"))
        })
    }
}

pub struct HttpEmbedder {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str, api_key_env: &str, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            base_url: base_url.to_string(),
            model: model.to_string(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let url = endpoint(&self.base_url, "embeddings");
        let body = json!({"model": self.model, "input": texts});
        let resp = post(&self.agent, &url, self.api_key.as_deref(), &body).map_err(EmbedError::ProviderUnavailable)?;
        let bad = |m: &str| EmbedError::ProviderUnavailable(format!("{url}: {m}"));
        let data = resp.get("data").and_then(Value::as_array).ok_or_else(|| bad("response has no data array"))?;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vector = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("data item has no embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| bad("non-numeric embedding component")))
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push((index, vector));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}
