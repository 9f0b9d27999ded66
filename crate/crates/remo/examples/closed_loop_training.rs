//! The whole loop, end to end, against a scripted world built to converge:
//! the stock prompt gets every answer wrong, the epoch-1 gradient demands
//! step verification, and the rewritten prompt carries a token that flips
//! the scripted reasoner to correct answers. Three epochs take validation
//! accuracy from 0.0 to 1.0 with no network and no randomness beyond the
//! seeded batch order.

use std::sync::Arc;

use remo::config::RunConfig;
use remo::dataset::{Dataset, DatasetRecord};
use remo::gateway::{Gateway, Purpose, ScriptTable, ScriptedBackend};
use remo::trainer::{Datasets, RunLayout, Trainer};

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

fn main() -> remo::Result<()> {
    let script = ScriptTable::new("I am not sure. #### 9")
        .rule(Purpose::Reasoning, "[CHECK-STEPS]", "I verified each step. #### 7")
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
        .rule(Purpose::Reflection, "", "Failures cluster on unverified arithmetic.")
        .rule(
            Purpose::OptimizerUpdate,
            "",
            "Rewrite decisively: demand explicit verification in the task prompt.",
        );
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new(script)), 4);

    let mut config = RunConfig::default();
    config.run.epochs = 3;
    config.run.batch_size = 4;
    config.run.seed = 17;

    let datasets = Datasets {
        train: split("train", 6),
        val: split("val", 4),
        test: Some(split("test", 4)),
    };

    let dir = tempfile::tempdir().expect("temp dir");
    let mut trainer = Trainer::new(config, datasets, gateway, dir.path())?;
    let artifacts = trainer.train()?;

    for m in &artifacts.metrics {
        println!(
            "epoch {}: train_err {:.2} val_acc {:.2} test_acc {:?} notebook {}a/{}p/{}r",
            m.epoch,
            m.train_error_rate,
            m.val_acc,
            m.test_acc,
            m.notebook_active,
            m.notebook_promoted,
            m.notebook_retired
        );
    }
    println!("final task prompt: {}", artifacts.prompt);

    let layout = RunLayout::new(dir.path());
    println!();
    print!("{}", remo::trainer::read_text(&layout.report_text())?);
    println!();
    println!("run artifacts under {}:", dir.path().display());
    let mut paths: Vec<_> = walk(dir.path());
    paths.sort();
    for p in paths {
        println!("  {p}");
    }
    Ok(())
}

fn walk(root: &std::path::Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(root) {
                out.push(rel.display().to_string());
            }
        }
    }
    out
}
