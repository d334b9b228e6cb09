//! HTTP backends speaking the OpenAI-compatible chat and embeddings
//! protocols.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, DecodingParams};
use crate::embedding::{Embedding, EmbeddingBackend, EmbeddingError};
use crate::instruct::InstructionTuple;

pub const API_KEY_ENV: &str = "TAXO_API_KEY";
pub const BASE_URL_ENV: &str = "TAXO_BASE_URL";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Falls back to `TAXO_BASE_URL`.
    #[serde(default)]
    pub base_url: Option<String>,
    pub model: String,
    /// Never read from config files; filled from `TAXO_API_KEY`.
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Expected embedding dimension; learned from the first response if unset.
    #[serde(default)]
    pub dim: Option<usize>,
}

fn default_retries() -> usize {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_timeout() -> u64 {
    120
}
fn default_in_flight() -> usize {
    4
}

impl RemoteConfig {
    pub fn new(model: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: None,
            model: model.into(),
            api_key: None,
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            dim: None,
        }
    }

    /// Fill the key, and the base URL when unset, from the environment.
    pub fn with_env(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        if self.base_url.is_none() {
            self.base_url = std::env::var(BASE_URL_ENV).ok().filter(|k| !k.is_empty());
        }
        self
    }
}

/// Counting semaphore bounding concurrent requests.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().expect("limiter lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter lock");
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Shared HTTP plumbing: auth, retries, in-flight limit.
struct Client {
    agent: ureq::Agent,
    base_url: String,
    api_key: String,
    max_retries: usize,
    backoff: Duration,
    limiter: Limiter,
    retries: AtomicUsize,
}

impl Client {
    fn new(cfg: &RemoteConfig) -> Result<Self, BackendError> {
        let api_key = cfg
            .api_key
            .clone()
            .ok_or_else(|| BackendError::MissingCredentials(API_KEY_ENV.into()))?;
        let base_url = cfg
            .base_url
            .clone()
            .ok_or_else(|| BackendError::Config(format!("no base URL (set {BASE_URL_ENV})")))?;
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
                .build(),
        );
        Ok(Client {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            limiter: Limiter::new(cfg.max_in_flight),
            retries: AtomicUsize::new(0),
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}{path}", self.base_url);
        let payload = body.to_string();
        let _slot = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .header("Content-Type", "application/json")
                .send(payload.as_str());
            let retryable = match result {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text)
                            .map_err(|e| BackendError::MalformedResponse(e.to_string()));
                    }
                    let err = BackendError::Http { status, body: text };
                    if status != 429 && status < 500 {
                        return Err(err);
                    }
                    err
                }
                Err(e) => BackendError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                },
            };
            if attempt > self.max_retries {
                return Err(match retryable {
                    BackendError::Transport { message, .. } => BackendError::Transport {
                        attempts: attempt,
                        message,
                    },
                    other => other,
                });
            }
            self.retries.fetch_add(1, Ordering::Relaxed);
            std::thread::sleep(self.backoff * attempt as u32);
        }
    }
}

/// Chat backend over `POST <base_url>/v1/chat/completions`.
pub struct RemoteChat {
    client: Client,
    model: String,
}

impl RemoteChat {
    pub fn new(cfg: &RemoteConfig) -> Result<Self, BackendError> {
        Ok(RemoteChat {
            client: Client::new(cfg)?,
            model: cfg.model.clone(),
        })
    }

    /// Retries performed so far across all calls.
    pub fn retries(&self) -> usize {
        self.client.retries.load(Ordering::Relaxed)
    }

    pub fn request_body(&self, prompt: &InstructionTuple, params: &DecodingParams) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.instruction},
                {"role": "user", "content": prompt.query},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(seed) = params.rng_seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl ChatBackend for RemoteChat {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(
        &self,
        prompt: &InstructionTuple,
        params: &DecodingParams,
    ) -> Result<String, BackendError> {
        params.validate()?;
        let resp = self
            .client
            .post("/v1/chat/completions", &self.request_body(prompt, params))?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                BackendError::MalformedResponse("missing choices[0].message.content".into())
            })
    }
}

/// Embedding backend over `POST <base_url>/v1/embeddings`.
pub struct RemoteEmbedder {
    client: Client,
    model: String,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(cfg: &RemoteConfig) -> Result<Self, BackendError> {
        let dim = OnceLock::new();
        if let Some(d) = cfg.dim {
            let _ = dim.set(d);
        }
        Ok(RemoteEmbedder {
            client: Client::new(cfg)?,
            model: cfg.model.clone(),
            dim,
        })
    }

    fn err(&self, message: impl Into<String>) -> EmbeddingError {
        EmbeddingError::Backend {
            backend: self.model.clone(),
            message: message.into(),
        }
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.model
    }

    /// Zero until known from config or the first response.
    fn dim(&self) -> usize {
        self.dim.get().copied().unwrap_or(0)
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({"model": self.model, "input": texts});
        let resp = self
            .client
            .post("/v1/embeddings", &body)
            .map_err(|e| self.err(e.to_string()))?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| self.err("missing data array"))?;
        if data.len() != texts.len() {
            return Err(self.err(format!("{} vectors for {} inputs", data.len(), texts.len())));
        }
        let mut slots: Vec<Option<Embedding>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let i = item
                .get("index")
                .and_then(Value::as_u64)
                .map_or(pos, |i| i as usize);
            let comps = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| self.err("missing embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| self.err("non-numeric component")))
                .collect::<Result<Vec<f64>, _>>()?;
            let v = Embedding::new(comps)?;
            let want = *self.dim.get_or_init(|| v.dim());
            if v.dim() != want {
                return Err(EmbeddingError::DimensionMismatch(want, v.dim()));
            }
            let slot = slots
                .get_mut(i)
                .ok_or_else(|| self.err(format!("index {i} out of range")))?;
            *slot = Some(v);
        }
        slots
            .into_iter()
            .map(|s| s.ok_or_else(|| self.err("duplicate index")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_credentials() {
        let mut cfg = RemoteConfig::new("m");
        cfg.base_url = Some("http://127.0.0.1:1".into());
        assert_eq!(
            RemoteChat::new(&cfg).err(),
            Some(BackendError::MissingCredentials(API_KEY_ENV.into()))
        );
    }

    #[test]
    fn request_body_shape() {
        let mut cfg = RemoteConfig::new("tiny");
        cfg.base_url = Some("http://localhost".into());
        cfg.api_key = Some("k".into());
        let chat = RemoteChat::new(&cfg).unwrap();
        let prompt = InstructionTuple {
            instruction: "I".into(),
            query: "Q".into(),
            output: None,
            task: crate::instruct::TaskKind::TaxoExpand,
            meta: Default::default(),
        };
        let params = DecodingParams {
            temperature: 0.0,
            max_tokens: 16,
            rng_seed: Some(5),
        };
        assert_eq!(
            chat.request_body(&prompt, &params),
            json!({
                "model": "tiny",
                "messages": [
                    {"role": "system", "content": "I"},
                    {"role": "user", "content": "Q"}
                ],
                "temperature": 0.0,
                "max_tokens": 16,
                "seed": 5
            })
        );
    }
}
