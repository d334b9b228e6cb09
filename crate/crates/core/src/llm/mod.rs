//! Chat-completion backends and parsers for their answers.
//!
//! Three backends implement [`ChatBackend`]:
//!
//! * [`RemoteChat`] speaks the OpenAI-style `/v1/chat/completions` protocol;
//! * [`OracleBackend`] answers from a hidden gold taxonomy, optionally with
//!   injected noise;
//! * [`ReplayBackend`] returns canned responses keyed by prompt hash and
//!   refuses anything it has not seen.

mod oracle;
mod parse;
mod remote;
mod replay;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::instruct::{InstructionTuple, TaskKind};

pub use oracle::OracleBackend;
pub use parse::{
    parse_expansion_response, parse_generated_parent, parse_parent_response, MatchKind, ParseError,
};
pub use remote::{RemoteChat, RemoteConfig, RemoteEmbedder, API_KEY_ENV, BASE_URL_ENV};
pub use replay::{ReplayBackend, ReplayRecord};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("missing credentials: set {0}")]
    MissingCredentials(String),
    #[error("no recorded response for prompt {0}")]
    UnknownPrompt(String),
    #[error("prompt names unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("seeds have no common gold parent: {0}")]
    NoCommonParent(String),
    #[error("unsupported prompt: {0}")]
    UnsupportedPrompt(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

/// Decoding settings sent with each request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

impl DecodingParams {
    /// Greedy for single-answer tasks, 0.7 for set expansion.
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::ParentGen | TaskKind::TaxoExpand => DecodingParams {
                temperature: 0.0,
                max_tokens: 64,
                rng_seed: None,
            },
            TaskKind::SetExpand => DecodingParams {
                temperature: 0.7,
                max_tokens: 1024,
                rng_seed: None,
            },
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::Config("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.temperature == 0.0
    }
}

/// A model that turns one prompt into raw text. Must accept concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(
        &self,
        prompt: &InstructionTuple,
        params: &DecodingParams,
    ) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, p: &InstructionTuple, d: &DecodingParams) -> Result<String, BackendError> {
        (**self).complete(p, d)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, p: &InstructionTuple, d: &DecodingParams) -> Result<String, BackendError> {
        (**self).complete(p, d)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, p: &InstructionTuple, d: &DecodingParams) -> Result<String, BackendError> {
        (**self).complete(p, d)
    }
}

/// Hex SHA-256 of the prompt text (instruction and query).
pub fn prompt_hash(prompt: &InstructionTuple) -> String {
    prompt_hash_parts(&prompt.instruction, &prompt.query)
}

pub fn prompt_hash_parts(instruction: &str, query: &str) -> String {
    let mut h = Sha256::new();
    h.update(instruction.as_bytes());
    h.update([0x1f]);
    h.update(query.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Wraps a backend and counts calls per task.
pub struct CountingBackend<B> {
    inner: B,
    counts: [AtomicUsize; 3],
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            counts: Default::default(),
        }
    }

    pub fn calls(&self, task: TaskKind) -> usize {
        self.counts[task as usize].load(Ordering::Relaxed)
    }

    pub fn total_calls(&self) -> usize {
        self.counts.iter().map(|c| c.load(Ordering::Relaxed)).sum()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for CountingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, p: &InstructionTuple, d: &DecodingParams) -> Result<String, BackendError> {
        self.counts[p.task as usize].fetch_add(1, Ordering::Relaxed);
        self.inner.complete(p, d)
    }
}
