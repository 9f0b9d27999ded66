//! The end-to-end training loop: epochs over seeded minibatches with
//! retrieval-augmented prediction and immediate mistake capture, followed
//! each epoch by validation, reflection, an optimizer-prompt rewrite, a
//! textual-gradient prompt update, and the notebook lifecycle pass — all
//! checkpointed atomically so an aborted run resumes from the last
//! completed epoch with identical results.

mod checkpoint;

pub use checkpoint::{atomic_write, read_jsonl, read_text, write_jsonl, RunLayout};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, UpdateFrequency};
use crate::dataset::Dataset;
use crate::digest;
use crate::error::{Error, Result};
use crate::gateway::{read_transcript, EventBody, Gateway, Purpose};
use crate::meta_optimizer::{optimizer_update, summarize_feedback, OptimizerPromptState, ReflectionSummary};
use crate::notebook::{MistakeNotebook, RetrievalResult};
use crate::prompts::PROMPT_ASSETS_VERSION;
use crate::reasoner::{assemble_prompt, exact_match, predict, prediction_from_trace, reasoning_request};
use crate::report;
use crate::textgrad::{compute_gradient, update_prompt, ExampleOutcome, PromptUpdate, UpdateOutcome};

/// One line of the metrics file: the state of the run after epoch `epoch`.
/// `val_acc` (and `test_acc` at the final epoch) are measured with the
/// prompt the epoch *started* with, before that epoch's update; the digests
/// are of the prompts the epoch produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_error_rate: f64,
    pub val_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<f64>,
    pub p_sha256: String,
    pub q_sha256: String,
    pub notebook_active: usize,
    pub notebook_promoted: usize,
    pub notebook_retired: usize,
}

/// Accuracy over one split with its failure tally.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Chat calls that failed; each counts as an incorrect prediction.
    pub transport_failures: usize,
}

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Option<Dataset>,
}

/// Handle to a finished (or cleanly stopped) run.
#[derive(Debug)]
pub struct RunArtifacts {
    pub run_dir: std::path::PathBuf,
    pub completed_epochs: usize,
    pub prompt: String,
    pub optimizer_prompt: String,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Val,
    Test,
}

pub struct Trainer {
    config: RunConfig,
    datasets: Datasets,
    gateway: Gateway,
    layout: RunLayout,
    notebook: MistakeNotebook,
    prompt: String,
    optimizer_prompt: String,
    val_history: Vec<f64>,
    metrics: Vec<EpochMetrics>,
    prompt_history: Vec<PromptUpdate>,
    optimizer_history: Vec<OptimizerPromptState>,
    latest_reflection: Option<ReflectionSummary>,
}

impl Trainer {
    /// Start a fresh run: initial prompts and memory come from the config,
    /// and epoch-0 artifacts are written immediately.
    pub fn new(
        config: RunConfig,
        datasets: Datasets,
        gateway: Gateway,
        run_dir: &Path,
    ) -> Result<Self> {
        config.validate()?;
        if datasets.train.is_empty() {
            return Err(Error::Precondition("training split is empty".into()));
        }
        if datasets.val.is_empty() {
            return Err(Error::Precondition("validation split is empty".into()));
        }
        let layout = RunLayout::new(run_dir);
        layout.ensure_dirs()?;
        let notebook = match &config.memory.initial_snapshot {
            Some(path) => MistakeNotebook::load(path, config.retrieval.promoted_bonus)?.0,
            None => MistakeNotebook::new(config.retrieval.promoted_bonus),
        };
        let prompt = config.initial_task_prompt().to_string();
        let optimizer_prompt = config.initial_optimizer_prompt().to_string();

        let mut snapshot = config.clone();
        snapshot.resolved = Some(crate::config::ResolvedSection {
            train_size: datasets.train.len(),
            val_size: datasets.val.len(),
            test_size: datasets.test.as_ref().map(Dataset::len).unwrap_or(0),
            backend_id: gateway.backend_id().to_string(),
            prompt_assets_version: PROMPT_ASSETS_VERSION.to_string(),
        });
        snapshot.save(&layout.config_snapshot())?;
        atomic_write(&layout.task_prompt(0), prompt.as_bytes())?;
        atomic_write(&layout.optimizer_prompt(0), optimizer_prompt.as_bytes())?;
        if !notebook.is_empty() {
            notebook.snapshot(0, &layout.memory_snapshot(0))?;
        }
        Ok(Trainer {
            config,
            datasets,
            gateway,
            layout,
            notebook,
            prompt,
            optimizer_prompt,
            val_history: Vec::new(),
            metrics: Vec::new(),
            prompt_history: Vec::new(),
            optimizer_history: Vec::new(),
            latest_reflection: None,
        })
    }

    /// Continue an aborted run from its last completed epoch: prompts,
    /// memory, metrics, and the transcript clock are restored from the run
    /// directory, and a resume event marks the boundary.
    pub fn resume(
        config: RunConfig,
        datasets: Datasets,
        gateway: Gateway,
        run_dir: &Path,
    ) -> Result<Self> {
        config.validate()?;
        let layout = RunLayout::new(run_dir);
        let metrics: Vec<EpochMetrics> = read_jsonl(&layout.metrics())?;
        let completed = metrics.last().map(|m| m.epoch).unwrap_or(0);
        let prompt = read_text(&layout.task_prompt(completed))?;
        let optimizer_prompt = read_text(&layout.optimizer_prompt(completed))?;
        let snapshot_path = layout.memory_snapshot(completed);
        let notebook = if snapshot_path.exists() {
            MistakeNotebook::load(&snapshot_path, config.retrieval.promoted_bonus)?.0
        } else {
            MistakeNotebook::new(config.retrieval.promoted_bonus)
        };
        let val_history = metrics.iter().map(|m| m.val_acc).collect();
        let prompt_history = read_jsonl(&layout.prompt_history())?;
        let optimizer_history = read_jsonl(&layout.optimizer_history())?;
        let last_t = match read_transcript(&layout.transcript()) {
            Ok(events) => events.last().map(|e| e.t_logical).unwrap_or(0),
            Err(Error::Storage { .. }) => 0,
            Err(e) => return Err(e),
        };
        gateway.resume_clock(last_t);
        gateway.log_event(EventBody::Resume { epoch: completed });
        Ok(Trainer {
            config,
            datasets,
            gateway,
            layout,
            notebook,
            prompt,
            optimizer_prompt,
            val_history,
            metrics,
            prompt_history,
            optimizer_history,
            latest_reflection: None,
        })
    }

    pub fn completed_epochs(&self) -> usize {
        self.metrics.last().map(|m| m.epoch).unwrap_or(0)
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn notebook(&self) -> &MistakeNotebook {
        &self.notebook
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn optimizer_prompt(&self) -> &str {
        &self.optimizer_prompt
    }

    /// Run remaining epochs up to T (or to `run.stop_after_epoch`), then
    /// write the run's report. Each epoch ends fully checkpointed.
    pub fn train(&mut self) -> Result<RunArtifacts> {
        let start = self.completed_epochs() + 1;
        for t in start..=self.config.run.epochs {
            self.run_epoch(t)?;
            if self.config.run.stop_after_epoch == Some(t) && t < self.config.run.epochs {
                break;
            }
        }
        report::write_run_report(self.layout.root())?;
        Ok(RunArtifacts {
            run_dir: self.layout.root().to_path_buf(),
            completed_epochs: self.completed_epochs(),
            prompt: self.prompt.clone(),
            optimizer_prompt: self.optimizer_prompt.clone(),
            metrics: self.metrics.clone(),
        })
    }

    /// Deterministic per-epoch batch order: the seed and epoch index fix the
    /// shuffle, so a resumed run replays the same batches.
    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config
                .run
                .seed
                .wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let mut order: Vec<usize> = (0..self.datasets.train.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    /// One full epoch. Stage order (epoch-frequency mode): train and
    /// validation reasoning, then reflection, optimizer update, gradient,
    /// prompt update; then the notebook lifecycle pass and the checkpoint.
    pub fn run_epoch(&mut self, t: usize) -> Result<EpochMetrics> {
        let mark = self.gateway.mark();
        self.notebook.set_epoch(t);
        let order = self.epoch_order(t);
        let mut epoch_outcomes: Vec<ExampleOutcome> = Vec::new();
        for batch in order.chunks(self.config.run.batch_size) {
            let outcomes = self.train_batch(batch)?;
            if self.config.optimizer.frequency == UpdateFrequency::Batch {
                if self.config.optimizer.enable_adaptive {
                    self.reflect_and_update_optimizer(t, &outcomes)?;
                }
                self.gradient_and_update_prompt(t, &outcomes)?;
            }
            epoch_outcomes.extend(outcomes);
        }

        let val = self.evaluate(Split::Val)?;
        self.val_history.push(val.accuracy);
        let test_acc = if t == self.config.run.epochs && self.datasets.test.is_some() {
            Some(self.evaluate(Split::Test)?.accuracy)
        } else {
            None
        };

        if self.config.optimizer.frequency == UpdateFrequency::Epoch {
            if self.config.optimizer.enable_adaptive {
                self.reflect_and_update_optimizer(t, &epoch_outcomes)?;
            } else {
                self.push_frozen_optimizer_record(t);
            }
            self.gradient_and_update_prompt(t, &epoch_outcomes)?;
        } else if !self.config.optimizer.enable_adaptive {
            self.push_frozen_optimizer_record(t);
        }

        let promotion = self
            .notebook
            .promote_epoch(t, &self.config.lifecycle, &self.gateway)?;
        self.gateway.log_event(EventBody::Promotion {
            epoch: t,
            promoted: promotion.promoted.clone(),
            retired: promotion.retired.clone(),
            deduplicated: promotion.deduplicated.clone(),
        });

        self.assert_stage_order(mark)?;

        let failures = epoch_outcomes.iter().filter(|o| o.failed()).count();
        let (active, promoted, retired) = self.notebook.counts_by_status();
        let metrics = EpochMetrics {
            epoch: t,
            train_error_rate: failures as f64 / epoch_outcomes.len() as f64,
            val_acc: val.accuracy,
            test_acc,
            p_sha256: digest::sha256_hex(self.prompt.as_bytes()),
            q_sha256: digest::sha256_hex(self.optimizer_prompt.as_bytes()),
            notebook_active: active,
            notebook_promoted: promoted,
            notebook_retired: retired,
        };
        self.metrics.push(metrics.clone());
        self.checkpoint(t)?;
        Ok(metrics)
    }

    /// Sequential pass over one batch: retrieve, predict, and correct
    /// immediately — a mistake recorded for example i is retrievable for
    /// example i+1.
    fn train_batch(&mut self, batch: &[usize]) -> Result<Vec<ExampleOutcome>> {
        let mut outcomes = Vec::with_capacity(batch.len());
        for &index in batch {
            let record = self.datasets.train.records[index].clone();
            let retrieved = self.retrieve_logged(&record.question, "train")?;
            let fused = assemble_prompt(
                &self.prompt,
                &retrieved,
                &record.question,
                self.config.retrieval.context_char_budget,
            )?;
            if fused.dropped_records > 0 {
                self.gateway.log_event(EventBody::ContextTruncation {
                    dropped: fused.dropped_records,
                });
            }
            let prediction = predict(&fused, &self.gateway)?;
            let correct = exact_match(&prediction.answer, &record.gold);
            if correct {
                let ids = retrieved.ids();
                if !ids.is_empty() {
                    self.notebook.record_assist(&ids, true)?;
                    self.gateway.log_event(EventBody::Assist { ids });
                }
            } else {
                let mut meta = BTreeMap::new();
                meta.insert("split".to_string(), "train".to_string());
                meta.insert("example_id".to_string(), record.id.clone());
                self.notebook.insert_mistake(
                    &self.gateway,
                    &record.question,
                    &record.gold,
                    &prediction.answer,
                    &prediction.trace,
                    meta,
                    self.gateway.mark(),
                )?;
            }
            outcomes.push(ExampleOutcome {
                id: record.id,
                question: record.question,
                gold: record.gold,
                prediction,
            });
        }
        Ok(outcomes)
    }

    /// Retrieval with its transcript event; disabled retrieval returns the
    /// empty result and logs nothing.
    fn retrieve_logged(&self, question: &str, phase: &str) -> Result<RetrievalResult> {
        if !self.config.retrieval.enable_rag {
            return Ok(RetrievalResult::empty());
        }
        let result = self
            .notebook
            .retrieve(&self.gateway, question, self.config.retrieval.top_k)?;
        match &result.skip_reason {
            Some(reason) => {
                self.gateway.log_event(EventBody::RetrievalSkip {
                    phase: phase.to_string(),
                    reason: reason.clone(),
                });
            }
            None => {
                self.gateway.log_event(EventBody::Retrieval {
                    phase: phase.to_string(),
                    query_sha256: result.query_digest.clone(),
                    hits: result.ids(),
                });
            }
        }
        Ok(result)
    }

    fn reflect_and_update_optimizer(
        &mut self,
        epoch: usize,
        outcomes: &[ExampleOutcome],
    ) -> Result<()> {
        let reflection = summarize_feedback(epoch, outcomes, &self.val_history, &self.gateway)?;
        let state = optimizer_update(
            &self.optimizer_prompt,
            &reflection,
            self.config.meta_instruction(),
            self.config.optimizer.max_prompt_chars,
            &self.gateway,
        )?;
        if let UpdateOutcome::Rejected(reason) = &state.outcome {
            self.gateway.log_event(EventBody::RejectedUpdate {
                target: "optimizer_prompt".to_string(),
                reason: reason.clone(),
            });
        }
        self.optimizer_prompt = state.text.clone();
        self.optimizer_history.push(state);
        self.latest_reflection = Some(reflection);
        Ok(())
    }

    /// With the adaptive optimizer ablated off, Q stays frozen but the
    /// history still gets one record per epoch for auditability.
    fn push_frozen_optimizer_record(&mut self, epoch: usize) {
        let sha = digest::sha256_hex(self.optimizer_prompt.as_bytes());
        self.optimizer_history.push(OptimizerPromptState {
            epoch,
            text: self.optimizer_prompt.clone(),
            sha256: sha.clone(),
            lineage_sha256: sha,
            outcome: UpdateOutcome::Skipped,
        });
    }

    fn gradient_and_update_prompt(
        &mut self,
        epoch: usize,
        outcomes: &[ExampleOutcome],
    ) -> Result<()> {
        if outcomes.is_empty() {
            return Ok(());
        }
        let reflection_text = if self.config.gradient.include_reflection {
            self.latest_reflection.as_ref().map(|r| r.summary.as_str())
        } else {
            None
        };
        let gradient = match compute_gradient(
            outcomes,
            &self.prompt,
            epoch,
            self.config.gradient.examples_cap,
            reflection_text,
            &self.gateway,
        ) {
            Ok(gradient) => gradient,
            Err(Error::GradientEmpty) => {
                let reason = "gradient model returned an empty critique".to_string();
                self.gateway.log_event(EventBody::RejectedUpdate {
                    target: "task_prompt".to_string(),
                    reason: reason.clone(),
                });
                let sha = digest::sha256_hex(self.prompt.as_bytes());
                self.prompt_history.push(PromptUpdate {
                    epoch,
                    old_sha256: sha.clone(),
                    new_prompt: self.prompt.clone(),
                    new_sha256: sha,
                    gradient_sha256: digest::sha256_hex(b""),
                    optimizer_sha256: digest::sha256_hex(self.optimizer_prompt.as_bytes()),
                    outcome: UpdateOutcome::Rejected(reason),
                });
                return Ok(());
            }
            Err(other) => return Err(other),
        };
        let update = update_prompt(
            &self.prompt,
            &gradient,
            &self.optimizer_prompt,
            self.config.optimizer.max_prompt_chars,
            &self.gateway,
        )?;
        if let UpdateOutcome::Rejected(reason) = &update.outcome {
            self.gateway.log_event(EventBody::RejectedUpdate {
                target: "task_prompt".to_string(),
                reason: reason.clone(),
            });
        }
        self.prompt = update.new_prompt.clone();
        self.prompt_history.push(update);
        Ok(())
    }

    /// Accuracy over a split with the current prompt and memory. Reasoning
    /// calls fan out in bounded waves; per-example failures count as
    /// incorrect. Never mutates notebook state.
    pub fn evaluate(&self, split: Split) -> Result<EvalOutcome> {
        let (dataset, phase) = match split {
            Split::Val => (&self.datasets.val, "val"),
            Split::Test => (
                self.datasets
                    .test
                    .as_ref()
                    .ok_or_else(|| Error::Config("no test split configured".into()))?,
                "test",
            ),
        };
        evaluate_dataset(
            dataset,
            phase,
            &self.prompt,
            &self.notebook,
            &self.config,
            &self.gateway,
        )
    }

    fn assert_stage_order(&self, mark: u64) -> Result<()> {
        let purposes = self.gateway.chat_purposes_since(mark);
        let multi_group = self.config.optimizer.frequency == UpdateFrequency::Batch;
        check_stage_order(&purposes, multi_group)
    }

    /// Persist the epoch: prompts, memory snapshot, metrics, histories, and
    /// the transcript — every file replaced atomically.
    fn checkpoint(&mut self, t: usize) -> Result<()> {
        atomic_write(&self.layout.task_prompt(t), self.prompt.as_bytes())?;
        atomic_write(
            &self.layout.optimizer_prompt(t),
            self.optimizer_prompt.as_bytes(),
        )?;
        self.notebook.snapshot(t, &self.layout.memory_snapshot(t))?;
        write_jsonl(&self.layout.metrics(), &self.metrics)?;
        write_jsonl(&self.layout.prompt_history(), &self.prompt_history)?;
        write_jsonl(&self.layout.optimizer_history(), &self.optimizer_history)?;
        self.gateway.flush_transcript(&self.layout.transcript())?;
        Ok(())
    }
}

/// Verify a round's chat purposes follow the stage order
/// reasoning → reflection → optimizer update → gradient → prompt update,
/// every stage optional, each non-reasoning stage at most once per round.
/// With `multi_group` (batch-frequency updates) the sequence may drop back
/// to reasoning and start a new round.
pub fn check_stage_order(purposes: &[Purpose], multi_group: bool) -> Result<()> {
    let rank = |p: Purpose| match p {
        Purpose::Reasoning => 0usize,
        Purpose::Reflection => 1,
        Purpose::OptimizerUpdate => 2,
        Purpose::Gradient => 3,
        Purpose::PromptUpdate => 4,
    };
    let mut current = 0;
    let mut seen_in_group = [0usize; 5];
    for &p in purposes {
        let r = rank(p);
        if r < current {
            if !(multi_group && r == 0) {
                return Err(Error::StageOrder(format!(
                    "purpose {p} after a later stage (sequence: {purposes:?})"
                )));
            }
            seen_in_group = [0; 5];
        }
        current = r;
        seen_in_group[r] += 1;
        if r > 0 && seen_in_group[r] > 1 {
            return Err(Error::StageOrder(format!(
                "purpose {p} repeated within one update round (sequence: {purposes:?})"
            )));
        }
    }
    Ok(())
}

/// Mean exact-match accuracy of `prompt` over a dataset, with retrieval
/// context when enabled. Standalone so inspection commands can score
/// arbitrary prompt/snapshot combinations.
pub fn evaluate_dataset(
    dataset: &Dataset,
    phase: &str,
    prompt: &str,
    notebook: &MistakeNotebook,
    config: &RunConfig,
    gateway: &Gateway,
) -> Result<EvalOutcome> {
    if dataset.is_empty() {
        return Err(Error::Precondition(format!(
            "evaluation split '{phase}' is empty"
        )));
    }
    let mut requests = Vec::with_capacity(dataset.len());
    for record in &dataset.records {
        let retrieved = if config.retrieval.enable_rag {
            let result = notebook.retrieve(gateway, &record.question, config.retrieval.top_k)?;
            match &result.skip_reason {
                Some(reason) => {
                    gateway.log_event(EventBody::RetrievalSkip {
                        phase: phase.to_string(),
                        reason: reason.clone(),
                    });
                }
                None => {
                    gateway.log_event(EventBody::Retrieval {
                        phase: phase.to_string(),
                        query_sha256: result.query_digest.clone(),
                        hits: result.ids(),
                    });
                }
            }
            result
        } else {
            RetrievalResult::empty()
        };
        let fused = assemble_prompt(
            prompt,
            &retrieved,
            &record.question,
            config.retrieval.context_char_budget,
        )?;
        if fused.dropped_records > 0 {
            gateway.log_event(EventBody::ContextTruncation {
                dropped: fused.dropped_records,
            });
        }
        requests.push(reasoning_request(&fused)?);
    }
    let results = gateway.chat_batch(&requests);
    let mut correct = 0;
    let mut transport_failures = 0;
    for (result, record) in results.iter().zip(&dataset.records) {
        match result {
            Ok(response) => {
                let prediction = prediction_from_trace(response.content.clone());
                if exact_match(&prediction.answer, &record.gold) {
                    correct += 1;
                }
            }
            Err(_) => transport_failures += 1,
        }
    }
    Ok(EvalOutcome {
        accuracy: correct as f64 / dataset.len() as f64,
        correct,
        total: dataset.len(),
        transport_failures,
    })
}
