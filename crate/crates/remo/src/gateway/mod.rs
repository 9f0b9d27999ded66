//! Uniform interface for chat-completion and embedding calls.
//!
//! Two backends sit behind the same [`Backend`] trait: a remote
//! OpenAI-compatible HTTP backend and a deterministic scripted backend that
//! all offline tests run against. The [`Gateway`] wraps a backend and owns
//! the run's event transcript: every chat call produces exactly one
//! transcript event, stamped with a monotone logical time.

mod remote;
mod script;
mod transcript;

pub use remote::{RemoteBackend, RemoteConfig};
pub use script::{hashed_bag_dim, ScriptRule, ScriptTable, ScriptedBackend};
pub use transcript::{read_transcript, verify_transcript, EventBody, EventLog, TranscriptEvent};

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};

/// Which stage of the optimization loop issued a request. Set on every
/// request; drives the transcript audit and per-purpose defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Reasoning,
    Gradient,
    PromptUpdate,
    Reflection,
    OptimizerUpdate,
}

impl Purpose {
    pub fn as_str(&self) -> &'static str {
        match self {
            Purpose::Reasoning => "reasoning",
            Purpose::Gradient => "gradient",
            Purpose::PromptUpdate => "prompt_update",
            Purpose::Reflection => "reflection",
            Purpose::OptimizerUpdate => "optimizer_update",
        }
    }
}

impl std::fmt::Display for Purpose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub purpose: Purpose,
}

impl ChatRequest {
    /// Build a request with per-purpose default sampling parameters:
    /// temperature 0.0 for reasoning (deterministic evaluation), 0.7 for the
    /// critique/rewrite purposes.
    pub fn new(purpose: Purpose, messages: Vec<Message>) -> Result<Self> {
        if messages.is_empty() {
            return Err(Error::Precondition("chat request has no messages".into()));
        }
        let temperature = match purpose {
            Purpose::Reasoning => 0.0,
            _ => 0.7,
        };
        Ok(ChatRequest {
            messages,
            temperature,
            max_output_tokens: 1024,
            purpose,
        })
    }

    pub fn with_temperature(mut self, temperature: f32) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_output_tokens(mut self, max: u32) -> Self {
        self.max_output_tokens = max;
        self
    }

    /// Canonical bytes for the transcript request digest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("chat request serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub content: String,
    pub backend_id: String,
    pub usage: Usage,
    pub latency_ms: u64,
}

/// Raw reply from a backend, before the gateway stamps identity and latency.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub content: String,
    pub usage: Usage,
}

/// A fixed-length real vector over a question text. Always L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Normalize raw backend output. Rejects empty and all-zero vectors.
    pub fn normalized(raw: Vec<f32>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmbeddingFailure("empty embedding vector".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::EmbeddingFailure(
                "embedding vector has zero or non-finite norm".into(),
            ));
        }
        Ok(EmbeddingVector {
            values: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f32 {
        let dot: f32 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum();
        let na = self.values.iter().map(|v| v * v).sum::<f32>().sqrt();
        let nb = other.values.iter().map(|v| v * v).sum::<f32>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        dot / (na * nb)
    }
}

/// Transport for one model provider.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn chat(&self, request: &ChatRequest) -> Result<BackendReply>;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

pub type BackendHandle = Arc<dyn Backend>;

/// Backend facade plus the run's event sequencer.
///
/// Safe for concurrent use; transcript ordering is serialized through the
/// single [`EventLog`]. Bounded fan-out ([`Gateway::chat_batch`]) is reserved
/// for evaluation-phase calls; training-step calls go through [`Gateway::chat`]
/// sequentially.
pub struct Gateway {
    backend: BackendHandle,
    log: EventLog,
    max_in_flight: usize,
}

impl Gateway {
    pub fn new(backend: BackendHandle, max_in_flight: usize) -> Self {
        Gateway {
            backend,
            log: EventLog::new(),
            max_in_flight: max_in_flight.max(1),
        }
    }

    /// Restore the logical clock after a resume so appended events continue
    /// the existing transcript without gaps.
    pub fn resume_clock(&self, last_logical_time: u64) {
        self.log.resume(last_logical_time);
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    /// Logical time of the most recently sequenced event.
    pub fn mark(&self) -> u64 {
        self.log.now()
    }

    /// One chat call, one transcript event.
    pub fn chat(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let (result, event) = self.chat_uncommitted(request);
        self.log.append(event);
        result
    }

    /// Evaluation-phase fan-out: runs requests in waves of at most
    /// `max_in_flight`, then commits the transcript events in request order
    /// so scripted runs stay byte-identical regardless of scheduling.
    pub fn chat_batch(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse>> {
        let mut slots: Vec<Option<(Result<ChatResponse>, EventBody)>> =
            (0..requests.len()).map(|_| None).collect();
        let indices: Vec<usize> = (0..requests.len()).collect();
        for wave in indices.chunks(self.max_in_flight) {
            let outcomes = std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|&i| scope.spawn(move || (i, self.chat_uncommitted(&requests[i]))))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("chat worker panicked"))
                    .collect::<Vec<_>>()
            });
            for (i, outcome) in outcomes {
                slots[i] = Some(outcome);
            }
        }
        let mut results = Vec::with_capacity(requests.len());
        let mut events = Vec::with_capacity(requests.len());
        for slot in slots {
            let (result, event) = slot.expect("all slots filled");
            results.push(result);
            events.push(event);
        }
        self.log.append_batch(events);
        results
    }

    fn chat_uncommitted(&self, request: &ChatRequest) -> (Result<ChatResponse>, EventBody) {
        let request_sha256 = digest::sha256_hex(&request.canonical_bytes());
        let started = Instant::now();
        match self.backend.chat(request) {
            Ok(reply) => {
                let latency_ms = started.elapsed().as_millis() as u64;
                let response_sha256 = digest::sha256_hex(reply.content.as_bytes());
                let event = EventBody::Chat {
                    purpose_tag: request.purpose,
                    request_sha256,
                    response_sha256,
                    usage: reply.usage,
                };
                let response = ChatResponse {
                    content: reply.content,
                    backend_id: self.backend.id().to_string(),
                    usage: reply.usage,
                    latency_ms,
                };
                (Ok(response), event)
            }
            Err(err) => {
                let event = EventBody::ChatError {
                    purpose_tag: request.purpose,
                    request_sha256,
                    error: err.to_string(),
                };
                (Err(err), event)
            }
        }
    }

    /// Embed a batch of texts. One vector per input, all normalized.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() || texts.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::EmptyInput);
        }
        let raw = self.backend.embed(texts)?;
        if raw.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "backend returned {} embeddings for {} inputs",
                raw.len(),
                texts.len()
            )));
        }
        raw.into_iter().map(EmbeddingVector::normalized).collect()
    }

    /// Record a non-chat event (retrieval, assist, promotion, ...).
    pub fn log_event(&self, body: EventBody) -> u64 {
        self.log.append(body)
    }

    /// Durably append all buffered events in logical-time order.
    /// Returns the number of events written.
    pub fn flush_transcript(&self, path: &std::path::Path) -> Result<usize> {
        self.log.flush_to(path)
    }

    /// Chat purposes sequenced after the given mark, in order. Used by the
    /// trainer's stage-order assertion.
    pub fn chat_purposes_since(&self, mark: u64) -> Vec<Purpose> {
        self.log.chat_purposes_since(mark)
    }

    /// Count of events sequenced after the given mark matching a predicate.
    pub fn events_since<F: FnMut(&TranscriptEvent) -> bool>(&self, mark: u64, pred: F) -> usize {
        self.log.count_since(mark, pred)
    }
}
