//! Epoch-level self-adaptation: summarize the epoch's feedback, then let a
//! fixed meta-instruction rewrite the optimizer prompt itself based on the
//! validation-accuracy trend.
//!
//! The reflection call degrades gracefully: if the backend fails, the
//! summary falls back to a deterministic rendering of the numeric fields and
//! the run continues. The optimizer rewrite uses the same accept/reject
//! guardrails as task-prompt updates; a rejection retains the previous
//! optimizer prompt.

use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, Message, Purpose};
use crate::prompts::REFLECTION_SYSTEM;
use crate::textgrad::{vet_rewrite, ExampleOutcome, UpdateOutcome};

/// Failures rendered into the reflection request body.
const REFLECTION_EXCERPT_CAP: usize = 5;

/// What the epoch's results looked like, in numbers and in prose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectionSummary {
    pub epoch: usize,
    /// Exact failed ÷ total over the epoch's training examples.
    pub batch_error_rate: f64,
    /// Digests of the failed questions.
    pub failed_digests: Vec<String>,
    /// Latest validation accuracy; absent before the first measurement.
    pub val_acc_current: Option<f64>,
    /// Change versus the previous measurement; present exactly when two or
    /// more measurements exist.
    pub val_acc_delta: Option<f64>,
    pub summary: String,
    /// True when the backend failed and the template rendering was used.
    pub from_fallback: bool,
}

/// One epoch's optimizer prompt with its lineage link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerPromptState {
    pub epoch: usize,
    pub text: String,
    pub sha256: String,
    /// Digest of the previous epoch's optimizer prompt.
    pub lineage_sha256: String,
    #[serde(flatten)]
    pub outcome: UpdateOutcome,
}

fn render_fraction(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    }
}

fn render_delta(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:+.4}"),
        None => "n/a".to_string(),
    }
}

fn numeric_lines(
    epoch: usize,
    error_rate: f64,
    failed: usize,
    total: usize,
    val_acc: Option<f64>,
    delta: Option<f64>,
) -> String {
    format!(
        "Epoch {epoch} feedback:\n- train error rate = {error_rate:.4} ({failed} of {total} failed)\n- val_acc = {}\n- val_acc delta = {}",
        render_fraction(val_acc),
        render_delta(delta),
    )
}

/// Render the reflection request from the epoch's outcomes and the
/// validation-accuracy history so far.
pub fn render_reflection_request(
    epoch: usize,
    outcomes: &[ExampleOutcome],
    val_history: &[f64],
) -> Result<ChatRequest> {
    let failures: Vec<&ExampleOutcome> = outcomes.iter().filter(|e| e.failed()).collect();
    let mut user = numeric_lines(
        epoch,
        failures.len() as f64 / outcomes.len() as f64,
        failures.len(),
        outcomes.len(),
        val_history.last().copied(),
        delta_of(val_history),
    );
    if !failures.is_empty() {
        user.push_str("\n\nSample failures:\n");
        for (i, f) in failures.iter().take(REFLECTION_EXCERPT_CAP).enumerate() {
            user.push_str(&format!(
                "[{n}] Question: {q} | Wrong: {p} | Correct: {g}\n",
                n = i + 1,
                q = f.question,
                p = f.prediction.answer,
                g = f.gold,
            ));
        }
    }
    user.push_str("\nWrite a short reflection summary of what is going wrong and what kind of prompt change would help.");
    ChatRequest::new(
        Purpose::Reflection,
        vec![Message::system(REFLECTION_SYSTEM), Message::user(user)],
    )
}

fn delta_of(val_history: &[f64]) -> Option<f64> {
    if val_history.len() >= 2 {
        Some(val_history[val_history.len() - 1] - val_history[val_history.len() - 2])
    } else {
        None
    }
}

/// Summarize the epoch: exact error rate plus a model-written (or, on
/// backend failure, template-rendered) reflection. One reflection-purpose
/// chat call. Never fails the epoch for backend reasons.
pub fn summarize_feedback(
    epoch: usize,
    outcomes: &[ExampleOutcome],
    val_history: &[f64],
    gateway: &Gateway,
) -> Result<ReflectionSummary> {
    if outcomes.is_empty() {
        return Err(Error::Precondition(
            "reflection requires a non-empty epoch of outcomes".into(),
        ));
    }
    let failures: Vec<&ExampleOutcome> = outcomes.iter().filter(|e| e.failed()).collect();
    let batch_error_rate = failures.len() as f64 / outcomes.len() as f64;
    let val_acc_current = val_history.last().copied();
    let val_acc_delta = delta_of(val_history);
    let request = render_reflection_request(epoch, outcomes, val_history)?;
    let fallback = || {
        numeric_lines(
            epoch,
            batch_error_rate,
            failures.len(),
            outcomes.len(),
            val_acc_current,
            val_acc_delta,
        )
    };
    let (summary, from_fallback) = match gateway.chat(&request) {
        Ok(response) if !response.content.trim().is_empty() => {
            (response.content.trim().to_string(), false)
        }
        Ok(_) => (fallback(), true),
        Err(Error::Transport { .. }) | Err(Error::Protocol(_)) => (fallback(), true),
        Err(other) => return Err(other),
    };
    Ok(ReflectionSummary {
        epoch,
        batch_error_rate,
        failed_digests: failures
            .iter()
            .map(|f| digest::sha256_hex(f.question.as_bytes()))
            .collect(),
        val_acc_current,
        val_acc_delta,
        summary,
        from_fallback,
    })
}

/// Render the optimizer-rewrite request: the fixed meta-instruction is the
/// system message; the user message carries the current optimizer prompt and
/// the reflection (absent numbers rendered as "n/a").
pub fn render_optimizer_request(
    q_prev: &str,
    reflection: &ReflectionSummary,
    meta_instruction: &str,
) -> Result<ChatRequest> {
    let user = format!(
        "Current optimizer instructions:\n<<<OPTIMIZER>>>\n{q_prev}\n<<<END>>>\n\n\
Reflection for epoch {epoch}:\n- train error rate = {rate:.4}\n- val_acc = {val}\n- val_acc delta = {delta}\n\n\
{summary}\n\n\
Rewrite the optimizer instructions. Reply with the full replacement instructions only.",
        epoch = reflection.epoch,
        rate = reflection.batch_error_rate,
        val = render_fraction(reflection.val_acc_current),
        delta = render_delta(reflection.val_acc_delta),
        summary = reflection.summary,
    );
    ChatRequest::new(
        Purpose::OptimizerUpdate,
        vec![Message::system(meta_instruction), Message::user(user)],
    )
}

/// Rewrite the optimizer prompt from the reflection. One
/// optimizer_update-purpose chat call; rejection retains the previous
/// prompt. Runs even when the delta is absent (first epoch).
pub fn optimizer_update(
    q_prev: &str,
    reflection: &ReflectionSummary,
    meta_instruction: &str,
    max_prompt_chars: usize,
    gateway: &Gateway,
) -> Result<OptimizerPromptState> {
    let lineage_sha256 = digest::sha256_hex(q_prev.as_bytes());
    let request = render_optimizer_request(q_prev, reflection, meta_instruction)?;
    let response = gateway.chat(&request)?;
    match vet_rewrite(&response.content, max_prompt_chars) {
        Ok(text) => Ok(OptimizerPromptState {
            epoch: reflection.epoch,
            sha256: digest::sha256_hex(text.as_bytes()),
            text,
            lineage_sha256,
            outcome: UpdateOutcome::Accepted,
        }),
        Err(reason) => Ok(OptimizerPromptState {
            epoch: reflection.epoch,
            sha256: lineage_sha256.clone(),
            text: q_prev.to_string(),
            lineage_sha256,
            outcome: UpdateOutcome::Rejected(reason),
        }),
    }
}
