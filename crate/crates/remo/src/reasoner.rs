//! The forward pass: fuse the system prompt with retrieved mistake context,
//! call the model, extract and normalize the final answer, score by exact
//! match.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, Message, Purpose};
use crate::notebook::RetrievalResult;

/// Sentinel for "no extractable answer". Never equals any normalized gold.
pub const NO_ANSWER: &str = "[no-answer]";

/// Marker preceding the final answer in model output and dataset golds.
pub const ANSWER_MARKER: &str = "####";

static NUMBER_TOKEN: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"[-+]?[$€£¥]?\d[\d,]*(?:\.\d+)?").unwrap());

static CANONICAL_NUMBER: Lazy<Regex> = Lazy::new(|| Regex::new(r"^-?\d+(?:\.\d+)?$").unwrap());

/// True when `s` has the canonical numeric shape [`normalize_answer`]
/// produces: optional sign, digits, optional fractional part.
pub fn is_canonical_number(s: &str) -> bool {
    CANONICAL_NUMBER.is_match(s)
}

/// System prompt + context block + question, rendered as a message list.
/// The context block is omitted entirely when no records were retrieved, and
/// records render in retrieval rank order.
#[derive(Debug, Clone)]
pub struct FusedPrompt {
    pub system: String,
    pub question: String,
    pub messages: Vec<Message>,
    /// Records dropped (lowest rank first) to fit the context budget.
    pub dropped_records: usize,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Raw model text, kept in full as the reasoning trace.
    pub trace: String,
    /// Normalized final answer, or [`NO_ANSWER`].
    pub answer: String,
    pub extraction_ok: bool,
}

const CONTEXT_HEADER: &str = "Lessons from past mistakes on similar problems:";

fn render_context_line(question: &str, predicted: &str, gold: &str) -> String {
    format!("Past mistake: {question} | Wrong: {predicted} | Correct: {gold}")
}

/// Concatenation fusion: `[system: P + optional context block, user: x]`.
/// Lowest-ranked records are dropped first when the block exceeds the budget.
pub fn assemble_prompt(
    system_prompt: &str,
    retrieved: &RetrievalResult,
    question: &str,
    context_char_budget: usize,
) -> Result<FusedPrompt> {
    if system_prompt.is_empty() {
        return Err(Error::Precondition("system prompt must be non-empty".into()));
    }
    let mut lines: Vec<String> = retrieved
        .records
        .iter()
        .map(|s| render_context_line(&s.record.question, &s.record.predicted, &s.record.gold))
        .collect();
    let mut dropped = 0;
    let block_len = |lines: &[String]| -> usize {
        CONTEXT_HEADER.len() + lines.iter().map(|l| l.len() + 1).sum::<usize>()
    };
    while !lines.is_empty() && block_len(&lines) > context_char_budget {
        lines.pop();
        dropped += 1;
    }
    let system = if lines.is_empty() {
        system_prompt.to_string()
    } else {
        let mut s = String::with_capacity(system_prompt.len() + 64);
        s.push_str(system_prompt);
        s.push_str("\n\n");
        s.push_str(CONTEXT_HEADER);
        for line in &lines {
            s.push('\n');
            s.push_str(line);
        }
        s
    };
    let messages = vec![Message::system(&system), Message::user(question)];
    Ok(FusedPrompt {
        system,
        question: question.to_string(),
        messages,
        dropped_records: dropped,
    })
}

/// One reasoning call; the full response is kept as the trace.
pub fn predict(fused: &FusedPrompt, gateway: &Gateway) -> Result<Prediction> {
    let request = ChatRequest::new(Purpose::Reasoning, fused.messages.clone())?;
    let response = gateway.chat(&request)?;
    Ok(prediction_from_trace(response.content))
}

/// Build the reasoning request without sending it (evaluation fan-out path).
pub fn reasoning_request(fused: &FusedPrompt) -> Result<ChatRequest> {
    ChatRequest::new(Purpose::Reasoning, fused.messages.clone())
}

pub fn prediction_from_trace(trace: String) -> Prediction {
    let answer = extract_answer(&trace);
    let extraction_ok = answer != NO_ANSWER;
    Prediction {
        trace,
        answer,
        extraction_ok,
    }
}

/// Pull the final answer out of a reasoning trace: the first numeric token
/// after the last `####` marker when one is present, otherwise the last
/// numeric token anywhere in the trace. Total function; anything without a
/// numeric answer maps to [`NO_ANSWER`].
pub fn extract_answer(trace: &str) -> String {
    let candidate = match trace.rfind(ANSWER_MARKER) {
        Some(pos) => {
            let tail = &trace[pos + ANSWER_MARKER.len()..];
            NUMBER_TOKEN.find(tail).map(|m| m.as_str().to_string())
        }
        None => NUMBER_TOKEN
            .find_iter(trace)
            .last()
            .map(|m| m.as_str().to_string()),
    };
    match candidate {
        Some(token) => normalize_answer(&token),
        None => NO_ANSWER.to_string(),
    }
}

/// Canonicalize a numeric answer string: strip commas, currency symbols, and
/// whitespace, drop a leading `+`, trim trailing fractional zeros (and a
/// then-bare decimal point). Sign is preserved. Empty input normalizes to
/// [`NO_ANSWER`].
pub fn normalize_answer(raw: &str) -> String {
    let mut s: String = raw
        .trim()
        .chars()
        .filter(|c| !matches!(c, ',' | '$' | '€' | '£' | '¥') && !c.is_whitespace())
        .collect();
    if let Some(stripped) = s.strip_prefix('+') {
        s = stripped.to_string();
    }
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s.is_empty() || s == "-" {
        return NO_ANSWER.to_string();
    }
    s
}

/// Canonical-string equality. The [`NO_ANSWER`] sentinel never matches.
pub fn exact_match(predicted: &str, gold: &str) -> bool {
    if predicted == NO_ANSWER || gold == NO_ANSWER || predicted.is_empty() || gold.is_empty() {
        return false;
    }
    predicted == gold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notebook::RetrievalResult;

    #[test]
    fn marker_extraction() {
        assert_eq!(extract_answer("#### 72"), "72");
        assert_eq!(extract_answer("#### -3.50"), "-3.5");
        assert_eq!(extract_answer("The answer is 12 because 3*4=12. #### 12"), "12");
    }

    #[test]
    fn comma_currency_normalization() {
        assert_eq!(
            extract_answer("…total is 1,234.50 so #### 1,234.50"),
            "1234.5"
        );
        assert_eq!(normalize_answer("$1,234.50"), "1234.5");
        assert_eq!(normalize_answer("+5"), "5");
        assert_eq!(normalize_answer("12.000"), "12");
        assert_eq!(normalize_answer(" 7 "), "7");
    }

    #[test]
    fn no_numeric_token_yields_sentinel() {
        let p = prediction_from_trace("I cannot solve this.".into());
        assert_eq!(p.answer, NO_ANSWER);
        assert!(!p.extraction_ok);
    }

    #[test]
    fn last_number_fallback_without_marker() {
        assert_eq!(extract_answer("3 plus 4 gives 7"), "7");
        assert_eq!(extract_answer("the value -8 wins over 3"), "3");
    }

    #[test]
    fn exact_match_basics() {
        assert!(exact_match("72", "72"));
        assert!(!exact_match("72", "7"));
        assert!(!exact_match(NO_ANSWER, NO_ANSWER));
        assert!(!exact_match(NO_ANSWER, "5"));
    }

    #[test]
    fn empty_context_omits_header() {
        let fused = assemble_prompt("solve it", &RetrievalResult::empty(), "q?", 4000).unwrap();
        assert_eq!(fused.system, "solve it");
        assert!(!fused.system.contains(CONTEXT_HEADER));
        assert_eq!(fused.messages.len(), 2);
        assert_eq!(fused.messages[1].content, "q?");
    }

    #[test]
    fn empty_prompt_rejected() {
        assert!(assemble_prompt("", &RetrievalResult::empty(), "q", 4000).is_err());
    }

    #[test]
    fn normalization_idempotent_on_examples() {
        for raw in ["72", "-3.5", "1234.5", "0.5", "007", "-0"] {
            assert_eq!(normalize_answer(raw), raw, "{raw} should be canonical");
            assert_eq!(normalize_answer(&normalize_answer(raw)), normalize_answer(raw));
        }
    }

    fn scored(id: u64, question: &str) -> crate::notebook::ScoredRecord {
        crate::notebook::ScoredRecord {
            record: crate::notebook::MemoryRecord {
                id,
                question: question.to_string(),
                gold: "4".to_string(),
                predicted: "5".to_string(),
                trace: String::new(),
                timestamp: id,
                meta: Default::default(),
                embedding: None,
                status: crate::notebook::RecordStatus::Active,
                failure_count: 1,
                assist_count: 0,
                created_epoch: 0,
            },
            similarity: 1.0 - id as f32 * 0.1,
            ranking_score: 1.0 - id as f32 * 0.1,
        }
    }

    #[test]
    fn context_renders_in_rank_order() {
        let retrieved = RetrievalResult {
            records: vec![scored(1, "first q"), scored(2, "second q")],
            query_digest: String::new(),
            skip_reason: None,
        };
        let fused = assemble_prompt("solve it", &retrieved, "q?", 4000).unwrap();
        assert!(fused.system.starts_with("solve it"));
        assert!(fused.system.contains(CONTEXT_HEADER));
        let first = fused.system.find("first q").unwrap();
        let second = fused.system.find("second q").unwrap();
        assert!(first < second);
        assert_eq!(fused.dropped_records, 0);
    }

    #[test]
    fn over_budget_drops_lowest_ranked_first() {
        let retrieved = RetrievalResult {
            records: (1..=5).map(|i| scored(i, &format!("question {i}"))).collect(),
            query_digest: String::new(),
            skip_reason: None,
        };
        let full = assemble_prompt("solve it", &retrieved, "q?", usize::MAX).unwrap();
        // system = prompt + "\n\n" + block, so the block measures this much:
        let full_block_len = full.system.len() - "solve it".len() - 2;
        let fused = assemble_prompt("solve it", &retrieved, "q?", full_block_len - 1).unwrap();
        assert!(fused.dropped_records >= 1);
        assert!(fused.system.contains("question 1"));
        assert!(!fused.system.contains(&format!(
            "question {}",
            5 - fused.dropped_records + 1
        )));
        // A budget too small for even one line omits the block entirely.
        let tiny = assemble_prompt("solve it", &retrieved, "q?", 10).unwrap();
        assert_eq!(tiny.dropped_records, 5);
        assert_eq!(tiny.system, "solve it");
    }
}
