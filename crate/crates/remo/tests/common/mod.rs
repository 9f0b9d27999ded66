//! Shared scripted world for the integration suites.
//!
//! The world closes the optimization loop: the reasoner answers 9 (wrong)
//! until the system prompt carries the `[CHECK-STEPS]` token, the gradient
//! script asks for exactly that, and the prompt-update script injects it.
//! A run starting from the default prompt therefore fails epoch 1 and is
//! perfect from epoch 2 on, entirely offline and deterministic.

use std::path::Path;
use std::sync::Arc;

use remo::config::RunConfig;
use remo::dataset::{Dataset, DatasetRecord};
use remo::gateway::{Gateway, Purpose, ScriptTable, ScriptedBackend};
use remo::trainer::{Datasets, RunArtifacts, Trainer};

pub const TOKEN: &str = "[CHECK-STEPS]";

pub fn world() -> ScriptTable {
    ScriptTable::new("I am not sure. #### 9")
        .rule(Purpose::Reasoning, TOKEN, "I verified each step. #### 7")
        .rule(
            Purpose::Gradient,
            "",
            "The prompt never asks for step verification; require checking every step before answering.",
        )
        .rule(
            Purpose::PromptUpdate,
            "",
            "Solve carefully. [CHECK-STEPS] Verify every step, then give the final numeric answer after '####'.",
        )
        .rule(
            Purpose::Reflection,
            "",
            "Most failures skip verification; push the rewrite toward explicit checks.",
        )
        .rule(
            Purpose::OptimizerUpdate,
            "delta = -",
            "Rewrite cautiously: adjust at most one sentence and keep every existing constraint.",
        )
        .rule(
            Purpose::OptimizerUpdate,
            "",
            "Rewrite decisively: demand concrete verification steps in the task prompt.",
        )
}

pub fn world_gateway() -> Gateway {
    Gateway::new(Arc::new(ScriptedBackend::new(world())), 4)
}

pub fn split(name: &str, n: usize) -> Dataset {
    Dataset {
        split: name.to_string(),
        records: (0..n)
            .map(|i| DatasetRecord {
                id: format!("{name}-{i:03}"),
                question: format!("Question {name} {i}: compute the value."),
                gold_raw: "#### 7".to_string(),
                gold: "7".to_string(),
            })
            .collect(),
    }
}

pub fn world_datasets() -> Datasets {
    Datasets {
        train: split("train", 6),
        val: split("val", 4),
        test: Some(split("test", 4)),
    }
}

pub fn world_config() -> RunConfig {
    let mut config = RunConfig::default();
    config.run.epochs = 3;
    config.run.batch_size = 4;
    config.run.seed = 17;
    config
}

pub fn run_world(dir: &Path, config: RunConfig) -> RunArtifacts {
    let mut trainer = Trainer::new(config, world_datasets(), world_gateway(), dir)
        .expect("trainer construction");
    trainer.train().expect("training run")
}
