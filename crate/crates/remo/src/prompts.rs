//! Versioned default prompt assets. Every text here is overridable from the
//! run config; the version string is recorded in the config snapshot so a
//! run directory states which defaults it ran with.

pub const PROMPT_ASSETS_VERSION: &str = "v1";

/// Initial task system prompt (the object being optimized).
pub const DEFAULT_TASK_PROMPT: &str = "You are a careful math tutor. Solve the problem step by step, \
then give the final numeric answer on its own line after '####'.";

/// Initial optimizer prompt: the system message governing how critiques are
/// mapped into task-prompt rewrites.
pub const DEFAULT_OPTIMIZER_PROMPT: &str = "You rewrite task system prompts. Apply the critique to \
produce an improved system prompt. Keep instructions imperative, concrete, and brief. \
Reply with the full replacement prompt only, no commentary.";

/// Fixed meta-instruction for the epoch-level optimizer rewrite. This is the
/// one prompt the loop never rewrites.
pub const META_INSTRUCTION: &str = "You tune a prompt-rewriting optimizer. You will see the \
optimizer's current instructions and a reflection summary for the last epoch: the training \
error rate and the validation-accuracy trend. Rewrite the optimizer's instructions so the \
next prompt update is more effective. If validation accuracy fell, make the rewriting \
policy more conservative. Reply with the full replacement instructions only, no commentary.";

/// System message for critique (gradient) calls.
pub const GRADIENT_SYSTEM: &str = "You critique task system prompts. Given the current system \
prompt and a batch of failed examples, identify the weaknesses in the prompt that caused \
the failures. Reply with a concise critique only.";

/// System message for epoch reflection calls.
pub const REFLECTION_SYSTEM: &str = "You summarize training feedback. Given an epoch's error \
rate, validation-accuracy trend, and sample failures, write a short reflection on what is \
going wrong and what kind of prompt change would help. Reply with the summary only.";
