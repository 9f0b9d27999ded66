//! Batch-level prompt optimization: distill failed examples into a textual
//! critique (the pseudo-gradient), then ask the optimizer prompt to rewrite
//! the task prompt under that critique.
//!
//! Both steps are separate, sequential chat calls. An all-correct batch
//! yields the canonical null gradient [`NO_CHANGE`] without a model call, and
//! a null gradient leaves the prompt untouched. A rewrite can be rejected
//! (empty or oversized response); rejection retains the old prompt and is a
//! signal, not a failure.

use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, Message, Purpose};
use crate::prompts::GRADIENT_SYSTEM;
use crate::reasoner::{exact_match, Prediction};

/// Canonical null gradient: the batch had no failures, skip the update.
pub const NO_CHANGE: &str = "NO_CHANGE";

/// Longest trace excerpt rendered into a critique request.
const TRACE_EXCERPT_CHARS: usize = 280;

/// One example's outcome within a batch, as the optimization steps consume it.
#[derive(Debug, Clone)]
pub struct ExampleOutcome {
    pub id: String,
    pub question: String,
    pub gold: String,
    pub prediction: Prediction,
}

impl ExampleOutcome {
    pub fn failed(&self) -> bool {
        !exact_match(&self.prediction.answer, &self.gold)
    }
}

/// The critique distilled from a batch's failures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextualGradient {
    pub text: String,
    /// Ids of the failed examples the critique was rendered from.
    pub source_ids: Vec<String>,
    pub epoch: usize,
}

impl TextualGradient {
    pub fn is_no_change(&self) -> bool {
        self.text == NO_CHANGE
    }

    pub fn sha256(&self) -> String {
        digest::sha256_hex(self.text.as_bytes())
    }
}

/// How a rewrite attempt ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "reason")]
pub enum UpdateOutcome {
    Accepted,
    Rejected(String),
    /// Null gradient: no call was made, the prompt is retained.
    Skipped,
}

/// Audit record for one prompt-update attempt; every accepted change in a
/// run is backed by one of these in the prompt-history file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptUpdate {
    pub epoch: usize,
    pub old_sha256: String,
    pub new_prompt: String,
    pub new_sha256: String,
    pub gradient_sha256: String,
    pub optimizer_sha256: String,
    #[serde(flatten)]
    pub outcome: UpdateOutcome,
}

impl PromptUpdate {
    pub fn changed(&self) -> bool {
        self.outcome == UpdateOutcome::Accepted && self.old_sha256 != self.new_sha256
    }
}

fn excerpt(trace: &str, limit: usize) -> String {
    if trace.chars().count() <= limit {
        return trace.to_string();
    }
    let cut: String = trace.chars().take(limit).collect();
    format!("{cut}…")
}

/// Render the critique request: the current prompt, up to `cap` failed
/// examples in batch order, and optionally the latest reflection summary.
pub fn render_gradient_request(
    prompt: &str,
    failures: &[&ExampleOutcome],
    cap: usize,
    reflection: Option<&str>,
) -> Result<ChatRequest> {
    let mut user = String::new();
    user.push_str("Current system prompt:\n<<<PROMPT>>>\n");
    user.push_str(prompt);
    user.push_str("\n<<<END>>>\n\n");
    let shown = failures.len().min(cap);
    user.push_str(&format!(
        "Failed examples ({shown} of {} failures):\n",
        failures.len()
    ));
    for (i, f) in failures.iter().take(cap).enumerate() {
        user.push_str(&format!(
            "[{n}] Question: {q}\n    Model answer: {p}\n    Correct answer: {g}\n    Trace excerpt: {t}\n",
            n = i + 1,
            q = f.question,
            p = f.prediction.answer,
            g = f.gold,
            t = excerpt(&f.prediction.trace, TRACE_EXCERPT_CHARS),
        ));
    }
    if let Some(r) = reflection {
        user.push_str(&format!("\nLatest reflection summary:\n{r}\n"));
    }
    user.push_str("\nCritique the system prompt's weaknesses that led to these failures.");
    ChatRequest::new(
        Purpose::Gradient,
        vec![Message::system(GRADIENT_SYSTEM), Message::user(user)],
    )
}

/// Distill the batch's failures into a critique of the current prompt.
/// One gradient-purpose chat call; an all-correct batch short-circuits to
/// the null gradient with no call at all.
pub fn compute_gradient(
    batch: &[ExampleOutcome],
    prompt: &str,
    epoch: usize,
    cap: usize,
    reflection: Option<&str>,
    gateway: &Gateway,
) -> Result<TextualGradient> {
    if batch.is_empty() {
        return Err(Error::Precondition("gradient batch is empty".into()));
    }
    let failures: Vec<&ExampleOutcome> = batch.iter().filter(|e| e.failed()).collect();
    if failures.is_empty() {
        return Ok(TextualGradient {
            text: NO_CHANGE.to_string(),
            source_ids: Vec::new(),
            epoch,
        });
    }
    let request = render_gradient_request(prompt, &failures, cap, reflection)?;
    let response = gateway.chat(&request)?;
    let text = response.content.trim().to_string();
    if text.is_empty() {
        return Err(Error::GradientEmpty);
    }
    Ok(TextualGradient {
        text,
        source_ids: failures
            .iter()
            .take(cap)
            .map(|f| f.id.clone())
            .collect(),
        epoch,
    })
}

/// Shared rewrite guardrails: trimmed response must be non-empty and within
/// the length budget, otherwise the old text is retained.
pub(crate) fn vet_rewrite(response: &str, max_chars: usize) -> std::result::Result<String, String> {
    let trimmed = response.trim();
    if trimmed.is_empty() {
        return Err("empty response".to_string());
    }
    if trimmed.chars().count() > max_chars {
        return Err(format!(
            "response length {} exceeds max_prompt_chars {max_chars}",
            trimmed.chars().count()
        ));
    }
    Ok(trimmed.to_string())
}

/// Render the rewrite request: the optimizer prompt is the system message,
/// the current prompt and critique form the user message.
pub fn render_update_request(
    prompt: &str,
    gradient: &TextualGradient,
    optimizer_prompt: &str,
) -> Result<ChatRequest> {
    let user = format!(
        "Current system prompt:\n<<<PROMPT>>>\n{prompt}\n<<<END>>>\n\nCritique:\n{g}\n\n\
Rewrite the system prompt to address the critique. Reply with the full replacement prompt only.",
        g = gradient.text
    );
    ChatRequest::new(
        Purpose::PromptUpdate,
        vec![Message::system(optimizer_prompt), Message::user(user)],
    )
}

/// Apply the critique: one prompt_update-purpose chat call whose system
/// message is the optimizer prompt. Callers skip this for a null gradient;
/// calling anyway returns a `Skipped` record without a model call.
pub fn update_prompt(
    prompt: &str,
    gradient: &TextualGradient,
    optimizer_prompt: &str,
    max_prompt_chars: usize,
    gateway: &Gateway,
) -> Result<PromptUpdate> {
    if gradient.text.is_empty() {
        return Err(Error::Precondition("gradient text is empty".into()));
    }
    let old_sha256 = digest::sha256_hex(prompt.as_bytes());
    let optimizer_sha256 = digest::sha256_hex(optimizer_prompt.as_bytes());
    if gradient.is_no_change() {
        return Ok(PromptUpdate {
            epoch: gradient.epoch,
            old_sha256: old_sha256.clone(),
            new_prompt: prompt.to_string(),
            new_sha256: old_sha256,
            gradient_sha256: gradient.sha256(),
            optimizer_sha256,
            outcome: UpdateOutcome::Skipped,
        });
    }
    let request = render_update_request(prompt, gradient, optimizer_prompt)?;
    let response = gateway.chat(&request)?;
    match vet_rewrite(&response.content, max_prompt_chars) {
        Ok(new_prompt) => Ok(PromptUpdate {
            epoch: gradient.epoch,
            old_sha256,
            new_sha256: digest::sha256_hex(new_prompt.as_bytes()),
            new_prompt,
            gradient_sha256: gradient.sha256(),
            optimizer_sha256,
            outcome: UpdateOutcome::Accepted,
        }),
        Err(reason) => Ok(PromptUpdate {
            epoch: gradient.epoch,
            old_sha256: old_sha256.clone(),
            new_prompt: prompt.to_string(),
            new_sha256: old_sha256,
            gradient_sha256: gradient.sha256(),
            optimizer_sha256,
            outcome: UpdateOutcome::Rejected(reason),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptTable, ScriptedBackend};
    use crate::reasoner::prediction_from_trace;
    use std::sync::Arc;

    fn outcome(id: u64, question: &str, gold: &str, trace: &str) -> ExampleOutcome {
        ExampleOutcome {
            id: format!("ex-{id}"),
            question: question.to_string(),
            gold: gold.to_string(),
            prediction: prediction_from_trace(trace.to_string()),
        }
    }

    fn gateway(table: ScriptTable) -> Gateway {
        Gateway::new(Arc::new(ScriptedBackend::new(table)), 4)
    }

    #[test]
    fn all_correct_batch_yields_null_gradient_without_call() {
        let gw = gateway(ScriptTable::new("should never be used"));
        let batch = vec![outcome(1, "q1", "4", "#### 4"), outcome(2, "q2", "9", "#### 9")];
        let mark = gw.mark();
        let g = compute_gradient(&batch, "prompt", 1, 8, None, &gw).unwrap();
        assert!(g.is_no_change());
        assert!(g.source_ids.is_empty());
        assert_eq!(gw.mark(), mark, "no chat call may be issued");
    }

    #[test]
    fn scripted_critique_returned_verbatim() {
        let gw = gateway(
            ScriptTable::new("d").rule(Purpose::Gradient, "", "the prompt lacks verification"),
        );
        let batch = vec![outcome(1, "q1", "4", "#### 5")];
        let g = compute_gradient(&batch, "prompt", 1, 8, None, &gw).unwrap();
        assert_eq!(g.text, "the prompt lacks verification");
        assert_eq!(g.source_ids, vec!["ex-1"]);
    }

    #[test]
    fn empty_batch_rejected() {
        let gw = gateway(ScriptTable::new("d"));
        assert!(matches!(
            compute_gradient(&[], "prompt", 1, 8, None, &gw),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn empty_critique_is_gradient_empty() {
        let gw = gateway(ScriptTable::new("   "));
        let batch = vec![outcome(1, "q1", "4", "#### 5")];
        assert!(matches!(
            compute_gradient(&batch, "prompt", 1, 8, None, &gw),
            Err(Error::GradientEmpty)
        ));
    }

    #[test]
    fn cap_limits_rendered_examples_in_batch_order() {
        let batch: Vec<ExampleOutcome> = (1..=12)
            .map(|i| outcome(i, &format!("question-{i}"), "1", "#### 2"))
            .collect();
        let failures: Vec<&ExampleOutcome> = batch.iter().collect();
        let request = render_gradient_request("prompt", &failures, 8, None).unwrap();
        let user = &request.messages[1].content;
        let blocks = user.matches("Question: ").count();
        assert_eq!(blocks, 8);
        for i in 1..=8 {
            assert!(user.contains(&format!("question-{i}")));
        }
        for i in 9..=12 {
            assert!(!user.contains(&format!("question-{i}")));
        }
        assert!(user.contains("(8 of 12 failures)"));
    }

    #[test]
    fn reflection_section_present_only_when_given() {
        let batch = vec![outcome(1, "q1", "4", "#### 5")];
        let failures: Vec<&ExampleOutcome> = batch.iter().collect();
        let without = render_gradient_request("p", &failures, 8, None).unwrap();
        assert!(!without.messages[1].content.contains("reflection summary"));
        let with = render_gradient_request("p", &failures, 8, Some("watch the units")).unwrap();
        assert!(with.messages[1].content.contains("watch the units"));
    }

    #[test]
    fn null_gradient_skips_update_without_call() {
        let gw = gateway(ScriptTable::new("should never be used"));
        let g = TextualGradient {
            text: NO_CHANGE.to_string(),
            source_ids: vec![],
            epoch: 1,
        };
        let mark = gw.mark();
        let update = update_prompt("keep me", &g, "optimizer", 4000, &gw).unwrap();
        assert_eq!(update.outcome, UpdateOutcome::Skipped);
        assert_eq!(update.new_prompt, "keep me");
        assert_eq!(update.old_sha256, update.new_sha256);
        assert_eq!(gw.mark(), mark);
    }

    #[test]
    fn scripted_update_replaces_prompt() {
        let gw = gateway(
            ScriptTable::new("d").rule(Purpose::PromptUpdate, "", "old prompt [CHECK-STEPS]"),
        );
        let g = TextualGradient {
            text: "add verification".to_string(),
            source_ids: vec!["ex-1".into()],
            epoch: 1,
        };
        let update = update_prompt("old prompt", &g, "optimizer", 4000, &gw).unwrap();
        assert_eq!(update.outcome, UpdateOutcome::Accepted);
        assert_eq!(update.new_prompt, "old prompt [CHECK-STEPS]");
        assert!(update.changed());
        assert_eq!(update.optimizer_sha256, digest::sha256_hex(b"optimizer"));
    }

    #[test]
    fn empty_response_rejected_prompt_retained() {
        let gw = gateway(ScriptTable::new("   \n  "));
        let g = TextualGradient {
            text: "critique".to_string(),
            source_ids: vec![],
            epoch: 1,
        };
        let update = update_prompt("keep me", &g, "opt", 4000, &gw).unwrap();
        assert!(matches!(update.outcome, UpdateOutcome::Rejected(_)));
        assert_eq!(update.new_prompt, "keep me");
        assert!(!update.changed());
    }

    #[test]
    fn oversized_response_rejected() {
        let gw = gateway(ScriptTable::new("x".repeat(500)));
        let g = TextualGradient {
            text: "critique".to_string(),
            source_ids: vec![],
            epoch: 1,
        };
        let update = update_prompt("keep me", &g, "opt", 100, &gw).unwrap();
        match &update.outcome {
            UpdateOutcome::Rejected(reason) => assert!(reason.contains("max_prompt_chars")),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert_eq!(update.new_prompt, "keep me");
    }

    #[test]
    fn request_roles_and_purposes() {
        let batch = vec![outcome(1, "q", "1", "#### 2")];
        let failures: Vec<&ExampleOutcome> = batch.iter().collect();
        let grad_req = render_gradient_request("task prompt", &failures, 8, None).unwrap();
        assert_eq!(grad_req.purpose, Purpose::Gradient);
        assert_eq!(grad_req.messages[0].content, GRADIENT_SYSTEM);

        let g = TextualGradient {
            text: "c".into(),
            source_ids: vec![],
            epoch: 1,
        };
        let update_req = render_update_request("task prompt", &g, "THE OPTIMIZER PROMPT").unwrap();
        assert_eq!(update_req.purpose, Purpose::PromptUpdate);
        assert_eq!(update_req.messages[0].content, "THE OPTIMIZER PROMPT");
        assert!(update_req.messages[1].content.contains("task prompt"));
        assert!(update_req.messages[1].content.contains("Critique:\nc"));
    }
}
