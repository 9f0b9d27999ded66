//! OpenAI-compatible remote backend: chat-completions and embeddings over
//! HTTP with bounded retries and capped backoff.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gateway::{Backend, BackendReply, ChatRequest, Usage};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL up to the version segment, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    pub embed_model: String,
    pub api_key: String,
    /// A failing call issues at most `1 + retry_limit` HTTP requests.
    pub retry_limit: u32,
    pub backoff_ms: u64,
    pub backoff_cap_ms: u64,
    pub timeout_secs: u64,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            model: model.into(),
            embed_model: "text-embedding-3-small".to_string(),
            api_key: api_key.into(),
            retry_limit: 2,
            backoff_ms: 250,
            backoff_cap_ms: 4000,
            timeout_secs: 120,
        }
    }
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    id: String,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        if cfg.api_key.is_empty() {
            return Err(Error::Config("remote backend requires an API key".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let id = format!("remote:{}", cfg.model);
        Ok(RemoteBackend { cfg, client, id })
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    /// POST with retries on transport failures and non-2xx statuses.
    fn post_with_retries(&self, url: &str, body: &serde_json::Value) -> Result<String> {
        let attempts = 1 + self.cfg.retry_limit;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self
                    .cfg
                    .backoff_ms
                    .saturating_mul(1 << (attempt - 1).min(16))
                    .min(self.cfg.backoff_cap_ms);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let sent = self
                .client
                .post(url)
                .bearer_auth(&self.cfg.api_key)
                .json(body)
                .send();
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.text().map_err(|e| Error::Transport {
                            message: format!("reading body: {e}"),
                            attempts: attempt + 1,
                        });
                    }
                    let body_text = resp.text().unwrap_or_default();
                    last_error = format!("HTTP {status}: {body_text}");
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(Error::Transport {
            message: last_error,
            attempts,
        })
    }
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct EmbeddingsBody {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, request: &ChatRequest) -> Result<BackendReply> {
        let body = json!({
            "model": self.cfg.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let text = self.post_with_retries(&self.endpoint("chat/completions"), &body)?;
        let parsed: ChatCompletion = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("chat completion body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::Protocol("chat completion has no choices".into()))?;
        let usage = parsed.usage.unwrap_or_default();
        Ok(BackendReply {
            content: choice.message.content.unwrap_or_default(),
            usage: Usage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
            },
        })
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let body = json!({
            "model": self.cfg.embed_model,
            "input": texts,
        });
        let text = self.post_with_retries(&self.endpoint("embeddings"), &body)?;
        let parsed: EmbeddingsBody = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("embeddings body: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "embeddings body has {} vectors for {} inputs",
                parsed.data.len(),
                texts.len()
            )));
        }
        let mut data = parsed.data;
        data.sort_by_key(|d| d.index);
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}
