//! Four runs, one table: every combination of the two ablation flags
//! (retrieval memory on/off, adaptive optimizer on/off) trained in the same
//! scripted world, then compared with the report generator.
//!
//! The world is built so the prompt rewrite fixes ordinary questions but
//! only retrieved mistake context fixes the "tricky" ones — and the test
//! split is half tricky. Runs without the notebook ace validation and drop
//! half the test split: the generalization-gap column tells the story.

use std::sync::Arc;

use remo::config::RunConfig;
use remo::dataset::{Dataset, DatasetRecord};
use remo::gateway::{Gateway, Purpose, ScriptTable, ScriptedBackend};
use remo::report::make_report;
use remo::trainer::{Datasets, Trainer};

fn record(name: &str, i: usize, phrasing: &str) -> DatasetRecord {
    DatasetRecord {
        id: format!("{name}-{i:03}"),
        question: format!("Question {name} {i}: compute the {phrasing}."),
        gold_raw: "#### 7".to_string(),
        gold: "7".to_string(),
    }
}

fn datasets() -> Datasets {
    // Train: four ordinary questions plus two tricky ones whose mistakes
    // will seed the notebook. Val: ordinary only. Test: half tricky.
    let mut train: Vec<DatasetRecord> = (0..4).map(|i| record("train", i, "value")).collect();
    train.extend((0..2).map(|i| record("train-trick", i, "tricky value")));
    let val: Vec<DatasetRecord> = (0..4).map(|i| record("val", i, "value")).collect();
    let mut test: Vec<DatasetRecord> = (0..2).map(|i| record("test", i, "value")).collect();
    test.extend((2..4).map(|i| record("test", i, "tricky value")));
    Datasets {
        train: Dataset { split: "train".to_string(), records: train },
        val: Dataset { split: "val".to_string(), records: val },
        test: Some(Dataset { split: "test".to_string(), records: test }),
    }
}

fn world() -> Gateway {
    // Rule order is the whole trick. A context line warning about a tricky
    // past mistake beats everything; otherwise tricky questions fail even
    // under the improved prompt; ordinary questions need only the prompt
    // token the epoch-1 rewrite introduces.
    let script = ScriptTable::new("I am not sure. #### 9")
        .rule(
            Purpose::Reasoning,
            "Past mistake: Question train-trick",
            "The context warns about this exact trap. #### 7",
        )
        .rule(Purpose::Reasoning, "tricky", "Looks simple enough. #### 9")
        .rule(Purpose::Reasoning, "[CHECK-STEPS]", "I verified each step. #### 7")
        .rule(
            Purpose::Gradient,
            "",
            "The prompt never asks for step verification; require checking every step.",
        )
        .rule(
            Purpose::PromptUpdate,
            "",
            "Solve carefully. [CHECK-STEPS] Verify every step, then answer after '####'.",
        )
        .rule(Purpose::Reflection, "", "Failures cluster on unverified arithmetic.")
        .rule(Purpose::OptimizerUpdate, "", "Rewrite decisively.");
    Gateway::new(Arc::new(ScriptedBackend::new(script)), 4)
}

fn main() -> remo::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut run_dirs = Vec::new();

    for (enable_rag, enable_adaptive) in [(false, false), (true, false), (false, true), (true, true)]
    {
        let mut config = RunConfig::default();
        config.run.epochs = 3;
        config.run.batch_size = 4;
        config.run.seed = 17;
        config.retrieval.enable_rag = enable_rag;
        config.optimizer.enable_adaptive = enable_adaptive;

        let label = config.method_label();
        let run_dir = dir.path().join(label.replace([' ', '+'], "_"));
        let mut trainer = Trainer::new(config, datasets(), world(), &run_dir)?;
        let artifacts = trainer.train()?;
        let last = artifacts.metrics.last().expect("at least one epoch");
        println!(
            "{label}: val {:.2}, test {:?}",
            last.val_acc, last.test_acc
        );
        run_dirs.push(run_dir);
    }

    println!();
    let report = make_report(&run_dirs)?;
    print!("{}", report.render_table());
    println!();
    println!("line-delimited records:");
    print!("{}", report.to_records()?);
    Ok(())
}
