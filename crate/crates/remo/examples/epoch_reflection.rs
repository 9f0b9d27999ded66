//! Epoch-level self-adaptation: a reflection summary condenses the epoch's
//! outcomes and validation trend, then the optimizer prompt — the
//! instructions the prompt rewriter itself follows — is rewritten in
//! response. A falling validation accuracy steers the rewrite toward
//! caution; the scripted backend below keys on the rendered delta.

use std::sync::Arc;

use remo::gateway::{Gateway, Purpose, ScriptTable, ScriptedBackend};
use remo::meta_optimizer::{optimizer_update, summarize_feedback};
use remo::prompts::{DEFAULT_OPTIMIZER_PROMPT, META_INSTRUCTION};
use remo::reasoner::prediction_from_trace;
use remo::textgrad::ExampleOutcome;

fn outcome(id: &str, gold: &str, trace: &str) -> ExampleOutcome {
    ExampleOutcome {
        id: id.to_string(),
        question: format!("question {id}"),
        gold: gold.to_string(),
        prediction: prediction_from_trace(trace.to_string()),
    }
}

fn main() -> remo::Result<()> {
    let script = ScriptTable::new("unused")
        .rule(
            Purpose::Reflection,
            "",
            "Two of three failures drop a carried digit; the current prompt never asks for a re-add.",
        )
        .rule(
            Purpose::OptimizerUpdate,
            "delta = -",
            "Rewrite cautiously: validation fell, so change at most one sentence and preserve every constraint that already works.",
        )
        .rule(
            Purpose::OptimizerUpdate,
            "",
            "Rewrite boldly: validation is improving, so replace vague guidance with concrete verification steps.",
        );
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new(script)), 4);

    let epoch_outcomes = vec![
        outcome("a", "18", "#### 17"),
        outcome("b", "150", "#### 150"),
        outcome("c", "9", "#### 8"),
    ];

    // Improving run: 0.55 -> 0.70. The bold rewrite rule fires.
    let improving = vec![0.55, 0.70];
    let reflection = summarize_feedback(1, &epoch_outcomes, &improving, &gateway)?;
    println!(
        "epoch {}: batch error rate {:.4}, val delta {:?}",
        reflection.epoch, reflection.batch_error_rate, reflection.val_acc_delta
    );
    println!("  summary: {}", reflection.summary);
    let state = optimizer_update(
        DEFAULT_OPTIMIZER_PROMPT,
        &reflection,
        META_INSTRUCTION,
        4000,
        &gateway,
    )?;
    println!("  optimizer prompt -> {}", state.text);

    // Regressing run: 0.70 -> 0.65. The cautious rule fires instead.
    let regressing = vec![0.70, 0.65];
    let reflection = summarize_feedback(2, &epoch_outcomes, &regressing, &gateway)?;
    println!(
        "epoch {}: batch error rate {:.4}, val delta {:?}",
        reflection.epoch, reflection.batch_error_rate, reflection.val_acc_delta
    );
    let state = optimizer_update(&state.text, &reflection, META_INSTRUCTION, 4000, &gateway)?;
    println!("  optimizer prompt -> {}", state.text);
    println!(
        "  lineage: {} -> {}",
        &state.lineage_sha256[..12],
        &state.sha256[..12]
    );

    // When the reflection model is unreachable the summary falls back to a
    // deterministic template instead of failing the epoch.
    struct Down;
    impl remo::gateway::Backend for Down {
        fn id(&self) -> &str {
            "down"
        }
        fn chat(
            &self,
            _request: &remo::gateway::ChatRequest,
        ) -> remo::Result<remo::gateway::BackendReply> {
            Err(remo::Error::Transport {
                message: "connection refused".to_string(),
                attempts: 3,
            })
        }
        fn embed(&self, _texts: &[&str]) -> remo::Result<Vec<Vec<f32>>> {
            Err(remo::Error::Transport {
                message: "connection refused".to_string(),
                attempts: 3,
            })
        }
    }
    let down_gateway = Gateway::new(Arc::new(Down), 1);
    let fallback = summarize_feedback(3, &epoch_outcomes, &regressing, &down_gateway)?;
    println!(
        "backend down: from_fallback = {}, summary = {:?}",
        fallback.from_fallback, fallback.summary
    );
    Ok(())
}
