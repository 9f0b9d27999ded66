//! Deterministic scripted backend: canned chat responses driven by a rule
//! table, and a pure hashed-token-bag embedder. Lookup is a pure function of
//! the request, so identical requests always yield identical responses.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Backend, BackendReply, ChatRequest, Purpose, Usage};

const EMBEDDING_DIM: usize = 256;

/// Dimension of scripted embeddings.
pub fn hashed_bag_dim() -> usize {
    EMBEDDING_DIM
}

/// One canned-response rule: fires when the request has the given purpose
/// and any message content contains the trigger substring. An empty trigger
/// matches every request of that purpose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    pub purpose: String,
    pub contains: String,
    pub respond: String,
}

/// Ordered rules plus a default response. First match in declaration order
/// wins; a miss never errors, the default applies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptTable {
    pub rules: Vec<ScriptRule>,
    pub default: String,
}

impl ScriptTable {
    pub fn new(default_response: impl Into<String>) -> Self {
        ScriptTable {
            rules: Vec::new(),
            default: default_response.into(),
        }
    }

    pub fn rule(mut self, purpose: Purpose, contains: &str, respond: &str) -> Self {
        self.rules.push(ScriptRule {
            purpose: purpose.as_str().to_string(),
            contains: contains.to_string(),
            respond: respond.to_string(),
        });
        self
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad script file {}: {e}", path.display())))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("script serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::storage(path, e))
    }

    pub fn response_for(&self, request: &ChatRequest) -> &str {
        for rule in &self.rules {
            if rule.purpose != request.purpose.as_str() {
                continue;
            }
            if rule.contains.is_empty()
                || request
                    .messages
                    .iter()
                    .any(|m| m.content.contains(&rule.contains))
            {
                return &rule.respond;
            }
        }
        &self.default
    }
}

pub struct ScriptedBackend {
    script: ScriptTable,
}

impl ScriptedBackend {
    pub fn new(script: ScriptTable) -> Self {
        ScriptedBackend { script }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(ScriptedBackend::new(ScriptTable::from_path(path)?))
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn chat(&self, request: &ChatRequest) -> Result<BackendReply> {
        let content = self.script.response_for(request).to_string();
        let prompt_tokens: u64 = request
            .messages
            .iter()
            .map(|m| m.content.split_whitespace().count() as u64)
            .sum();
        let completion_tokens = content.split_whitespace().count() as u64;
        Ok(BackendReply {
            content,
            usage: Usage {
                prompt_tokens,
                completion_tokens,
            },
        })
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| hashed_bag_embedding(t)).collect())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Pure function of the input text: lowercase, split on non-alphanumeric,
/// hash each token into one of 256 buckets, L2-normalize the bucket counts.
/// A text with no alphanumeric tokens hashes as a single opaque token so the
/// result is never all-zero.
fn hashed_bag_embedding(text: &str) -> Vec<f32> {
    let lower = text.to_lowercase();
    let mut values = vec![0.0f32; EMBEDDING_DIM];
    let mut any = false;
    for token in lower.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        any = true;
        let bucket = (fnv1a64(token.as_bytes()) % EMBEDDING_DIM as u64) as usize;
        values[bucket] += 1.0;
    }
    if !any {
        let bucket = (fnv1a64(lower.trim().as_bytes()) % EMBEDDING_DIM as u64) as usize;
        values[bucket] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f32>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    values
}
