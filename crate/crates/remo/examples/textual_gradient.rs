//! One textual-gradient round: failed examples become a critique, the
//! critique plus the optimizer prompt become a rewritten task prompt, and
//! the vetting gate rejects rewrites that are empty or oversized.

use std::sync::Arc;

use remo::gateway::{Gateway, Purpose, ScriptTable, ScriptedBackend};
use remo::prompts::DEFAULT_OPTIMIZER_PROMPT;
use remo::reasoner::prediction_from_trace;
use remo::textgrad::{compute_gradient, update_prompt, ExampleOutcome, UpdateOutcome};

fn outcome(id: &str, question: &str, gold: &str, trace: &str) -> ExampleOutcome {
    ExampleOutcome {
        id: id.to_string(),
        question: question.to_string(),
        gold: gold.to_string(),
        prediction: prediction_from_trace(trace.to_string()),
    }
}

fn main() -> remo::Result<()> {
    let script = ScriptTable::new("unused")
        .rule(
            Purpose::Gradient,
            "",
            "The prompt lets the model skip unit conversions; require converting all quantities to one unit before arithmetic.",
        )
        .rule(
            Purpose::PromptUpdate,
            "oversized",
            &"x".repeat(5000),
        )
        .rule(
            Purpose::PromptUpdate,
            "",
            "Solve the problem. Convert every quantity to a single unit first, then compute, then answer after '####'.",
        );
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new(script)), 4);

    let prompt = "Solve the problem and answer after '####'.";
    let batch = vec![
        outcome("ex-1", "How many minutes in 2.5 hours?", "150", "2.5 * 60... #### 125"),
        outcome("ex-2", "Grams in 3 kg?", "3000", "Just 3. #### 3"),
        outcome("ex-3", "What is 2 + 2?", "4", "#### 4"),
    ];

    let gradient = compute_gradient(&batch, prompt, 1, 8, None, &gateway)?;
    println!("gradient over {:?}:\n  {}", gradient.source_ids, gradient.text);

    let update = update_prompt(prompt, &gradient, DEFAULT_OPTIMIZER_PROMPT, 4000, &gateway)?;
    println!(
        "update: {:?}\n  old {} -> new {}",
        update.outcome,
        &update.old_sha256[..12],
        &update.new_sha256[..12]
    );
    println!("new prompt: {}", update.new_prompt);

    // A batch with zero failures produces the no-change sentinel and the
    // update round is skipped without a model call.
    let clean = vec![outcome("ex-4", "What is 1 + 1?", "2", "#### 2")];
    let gradient = compute_gradient(&clean, &update.new_prompt, 2, 8, None, &gateway)?;
    println!(
        "clean batch: is_no_change = {}, text = {:?}",
        gradient.is_no_change(),
        gradient.text
    );
    let skipped = update_prompt(&update.new_prompt, &gradient, DEFAULT_OPTIMIZER_PROMPT, 4000, &gateway)?;
    println!("clean batch update outcome: {:?}", skipped.outcome);
    assert!(matches!(skipped.outcome, UpdateOutcome::Skipped));

    // An oversized rewrite is rejected and the old prompt retained.
    let oversized_batch = vec![outcome(
        "ex-5",
        "oversized trigger question",
        "1",
        "#### 2",
    )];
    let gradient = compute_gradient(&oversized_batch, "oversized", 3, 8, None, &gateway)?;
    let rejected = update_prompt("oversized", &gradient, DEFAULT_OPTIMIZER_PROMPT, 4000, &gateway)?;
    match &rejected.outcome {
        UpdateOutcome::Rejected(reason) => println!("oversized rewrite rejected: {reason}"),
        other => println!("unexpected outcome {other:?}"),
    }
    assert_eq!(rejected.new_prompt, "oversized");
    Ok(())
}
