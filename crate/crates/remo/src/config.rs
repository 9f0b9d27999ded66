//! Run configuration: one TOML document with a section per module, every
//! default overridable. A run directory stores the resolved config as
//! `config.snapshot` so any result can be reproduced from one file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Gateway, RemoteBackend, RemoteConfig, ScriptTable, ScriptedBackend};
use crate::notebook::LifecyclePolicy;
use crate::prompts;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    /// Number of training epochs T.
    pub epochs: usize,
    pub batch_size: usize,
    /// Fixes batch order and subsampling.
    pub seed: u64,
    /// Clean abort after this epoch's checkpoint; resume later. None runs to T.
    pub stop_after_epoch: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            epochs: 3,
            batch_size: 8,
            seed: 17,
            stop_after_epoch: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Take this many training records (seeded selection) when set.
    pub subsample_train: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Scripted backend: path to the rule-table JSON.
    pub script: Option<PathBuf>,
    /// Remote backend settings (OpenAI-compatible).
    pub base_url: String,
    pub model: String,
    pub embed_model: String,
    /// Environment variable holding the API key; never stored in config.
    pub api_key_env: String,
    pub retry_limit: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Concurrent request bound for evaluation fan-out.
    pub max_in_flight: usize,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Scripted,
            script: None,
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4o-mini".to_string(),
            embed_model: "text-embedding-3-small".to_string(),
            api_key_env: "REMO_API_KEY".to_string(),
            retry_limit: 2,
            backoff_ms: 250,
            timeout_secs: 120,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSection {
    pub enable_rag: bool,
    pub top_k: usize,
    /// Character budget for the fused mistake-context block.
    pub context_char_budget: usize,
    /// Ranking bonus for promoted records; zero disables the preference.
    pub promoted_bonus: f32,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            enable_rag: true,
            top_k: 5,
            context_char_budget: 4000,
            promoted_bonus: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GradientSection {
    /// Failed examples rendered into one critique request.
    pub examples_cap: usize,
    /// Fold the latest reflection summary into the critique request.
    pub include_reflection: bool,
}

impl Default for GradientSection {
    fn default() -> Self {
        GradientSection {
            examples_cap: 8,
            include_reflection: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateFrequency {
    Epoch,
    Batch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSection {
    pub enable_adaptive: bool,
    pub frequency: UpdateFrequency,
    /// Accepted rewrites must fit this many characters.
    pub max_prompt_chars: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            enable_adaptive: true,
            frequency: UpdateFrequency::Epoch,
            max_prompt_chars: 4000,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptsSection {
    /// Initial task system prompt override.
    pub task: Option<String>,
    /// Initial optimizer prompt override.
    pub optimizer: Option<String>,
    /// Meta-instruction override for optimizer rewrites.
    pub meta_instruction: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MemorySection {
    /// Start from this notebook snapshot instead of empty memory.
    pub initial_snapshot: Option<PathBuf>,
}

/// Sizes and identifiers resolved at run time and recorded in the config
/// snapshot so reports are self-contained.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolvedSection {
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub backend_id: String,
    pub prompt_assets_version: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub run: RunSection,
    pub dataset: DatasetSection,
    pub backend: BackendSection,
    pub retrieval: RetrievalSection,
    pub lifecycle: LifecyclePolicy,
    pub gradient: GradientSection,
    pub optimizer: OptimizerSection,
    pub prompts: PromptsSection,
    pub memory: MemorySection,
    /// Filled by the trainer when the snapshot is written.
    pub resolved: Option<ResolvedSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("config serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::storage(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.epochs == 0 {
            return Err(Error::Config("run.epochs must be at least 1".into()));
        }
        if self.run.batch_size == 0 {
            return Err(Error::Config("run.batch_size must be at least 1".into()));
        }
        if self.retrieval.enable_rag && self.retrieval.top_k == 0 {
            return Err(Error::Config(
                "retrieval.top_k must be at least 1 when retrieval.enable_rag is true".into(),
            ));
        }
        if self.optimizer.max_prompt_chars == 0 {
            return Err(Error::Config(
                "optimizer.max_prompt_chars must be at least 1".into(),
            ));
        }
        if self.backend.max_in_flight == 0 {
            return Err(Error::Config(
                "backend.max_in_flight must be at least 1".into(),
            ));
        }
        if let Some(stop) = self.run.stop_after_epoch {
            if stop == 0 {
                return Err(Error::Config(
                    "run.stop_after_epoch must be at least 1 when set".into(),
                ));
            }
        }
        Ok(())
    }

    /// Retrieval depth actually used: 0 whenever retrieval is ablated off.
    pub fn effective_top_k(&self) -> usize {
        if self.retrieval.enable_rag {
            self.retrieval.top_k
        } else {
            0
        }
    }

    /// Report row label derived from the two ablation flags.
    pub fn method_label(&self) -> &'static str {
        match (self.retrieval.enable_rag, self.optimizer.enable_adaptive) {
            (false, false) => "TextGrad",
            (true, false) => "Reflection RAG",
            (false, true) => "Adaptive Optimizer",
            (true, true) => "RAG+Optimizer",
        }
    }

    pub fn initial_task_prompt(&self) -> &str {
        self.prompts
            .task
            .as_deref()
            .unwrap_or(prompts::DEFAULT_TASK_PROMPT)
    }

    pub fn initial_optimizer_prompt(&self) -> &str {
        self.prompts
            .optimizer
            .as_deref()
            .unwrap_or(prompts::DEFAULT_OPTIMIZER_PROMPT)
    }

    pub fn meta_instruction(&self) -> &str {
        self.prompts
            .meta_instruction
            .as_deref()
            .unwrap_or(prompts::META_INSTRUCTION)
    }

    /// Construct the configured backend and wrap it in a gateway.
    pub fn build_gateway(&self) -> Result<Gateway> {
        let backend: crate::gateway::BackendHandle = match self.backend.kind {
            BackendKind::Scripted => {
                let script = match &self.backend.script {
                    Some(path) => ScriptTable::from_path(path)?,
                    None => {
                        return Err(Error::Config(
                            "backend.script is required for the scripted backend".into(),
                        ))
                    }
                };
                std::sync::Arc::new(ScriptedBackend::new(script))
            }
            BackendKind::Remote => {
                let api_key = std::env::var(&self.backend.api_key_env).map_err(|_| {
                    Error::Config(format!(
                        "environment variable {} is not set",
                        self.backend.api_key_env
                    ))
                })?;
                let remote = RemoteConfig {
                    base_url: self.backend.base_url.clone(),
                    model: self.backend.model.clone(),
                    embed_model: self.backend.embed_model.clone(),
                    api_key,
                    retry_limit: self.backend.retry_limit,
                    backoff_ms: self.backend.backoff_ms,
                    backoff_cap_ms: 4000,
                    timeout_secs: self.backend.timeout_secs,
                };
                std::sync::Arc::new(RemoteBackend::new(remote)?)
            }
        };
        Ok(Gateway::new(backend, self.backend.max_in_flight))
    }
}
