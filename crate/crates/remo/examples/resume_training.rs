//! Stopping a run mid-way and resuming it from the last epoch checkpoint.
//!
//! Every epoch ends with prompts, memory, metrics, and transcript flushed
//! atomically, so a resumed run replays the remaining epochs and lands on
//! exactly the metrics an uninterrupted run produces.

use std::sync::Arc;

use remo::config::RunConfig;
use remo::dataset::{Dataset, DatasetRecord};
use remo::gateway::{Gateway, Purpose, ScriptTable, ScriptedBackend};
use remo::trainer::{Datasets, Trainer};

fn world() -> Gateway {
    let script = ScriptTable::new("I am not sure. #### 9")
        .rule(Purpose::Reasoning, "[CHECK-STEPS]", "I verified each step. #### 7")
        .rule(Purpose::Gradient, "", "Require checking every step before answering.")
        .rule(
            Purpose::PromptUpdate,
            "",
            "Solve carefully. [CHECK-STEPS] Verify every step, then answer after '####'.",
        )
        .rule(Purpose::Reflection, "", "Failures cluster on unverified arithmetic.")
        .rule(Purpose::OptimizerUpdate, "", "Rewrite decisively.");
    Gateway::new(Arc::new(ScriptedBackend::new(script)), 4)
}

fn split(name: &str, n: usize) -> Dataset {
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

fn datasets() -> Datasets {
    Datasets {
        train: split("train", 6),
        val: split("val", 4),
        test: Some(split("test", 4)),
    }
}

fn config() -> RunConfig {
    let mut config = RunConfig::default();
    config.run.epochs = 3;
    config.run.batch_size = 4;
    config.run.seed = 17;
    config
}

fn main() -> remo::Result<()> {
    // Reference: the same world trained straight through.
    let reference_dir = tempfile::tempdir().expect("temp dir");
    let reference = Trainer::new(config(), datasets(), world(), reference_dir.path())?.train()?;

    // Interrupted run: stop cleanly after epoch 1...
    let dir = tempfile::tempdir().expect("temp dir");
    let mut stopping = config();
    stopping.run.stop_after_epoch = Some(1);
    let partial = Trainer::new(stopping, datasets(), world(), dir.path())?.train()?;
    println!(
        "stopped after epoch {} (val {:.2})",
        partial.completed_epochs,
        partial.metrics.last().map(|m| m.val_acc).unwrap_or(0.0)
    );

    // ...then pick the run directory back up with a fresh process state.
    let mut resumed = Trainer::resume(config(), datasets(), world(), dir.path())?;
    println!("resumed at epoch {}", resumed.completed_epochs() + 1);
    let finished = resumed.train()?;

    for (a, b) in reference.metrics.iter().zip(&finished.metrics) {
        println!(
            "epoch {}: straight-through val {:.2} | resumed val {:.2} | prompts match: {}",
            a.epoch,
            a.val_acc,
            b.val_acc,
            a.p_sha256 == b.p_sha256 && a.q_sha256 == b.q_sha256
        );
    }
    assert_eq!(reference.metrics, finished.metrics);
    println!("resumed run reproduced the uninterrupted metrics exactly");
    Ok(())
}
