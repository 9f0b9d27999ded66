//! A mistake notebook's full life: wrong answers become records, repeat
//! failures merge instead of duplicating, records that help a later correct
//! answer get promoted, records that only ever fail retire as noise, and
//! the whole store snapshots to disk and loads back verbatim.

use std::collections::BTreeMap;
use std::sync::Arc;

use remo::gateway::{Gateway, ScriptTable, ScriptedBackend};
use remo::notebook::{LifecyclePolicy, MistakeNotebook};

fn main() -> remo::Result<()> {
    let gateway = Gateway::new(
        Arc::new(ScriptedBackend::new(ScriptTable::new("unused"))),
        4,
    );
    let policy = LifecyclePolicy::default();
    let mut notebook = MistakeNotebook::new(0.05);

    let record = |nb: &mut MistakeNotebook, question: &str, predicted: &str| {
        nb.insert_mistake(
            &gateway,
            question,
            "42",
            predicted,
            "trace: multiplied instead of adding",
            BTreeMap::new(),
            0,
        )
    };

    // Epoch 1: three distinct mistakes, plus a re-failure of the first
    // question (merged in place, not duplicated).
    notebook.set_epoch(1);
    let apples = record(&mut notebook, "How many apples after doubling 21?", "21")?;
    let trains = record(&mut notebook, "Two trains 42 km apart meet when?", "84")?;
    let _coins = record(&mut notebook, "Coins summing to 42 cents?", "40")?;
    let again = record(&mut notebook, "how many  apples after doubling 21?", "19")?;
    assert_eq!(apples, again, "normalized duplicate question must merge");
    println!("after epoch-1 inserts: {} record(s)", notebook.len());

    notebook.promote_epoch(1, &policy, &gateway)?;

    // Epoch 2: the apples record helps a correct answer; the trains record
    // keeps failing and never assists.
    notebook.set_epoch(2);
    let hits = notebook.retrieve(&gateway, "How many apples after doubling 21?", 1)?;
    println!(
        "retrieved for the apples question: {:?}",
        hits.records
            .iter()
            .map(|s| (s.record.id, s.similarity))
            .collect::<Vec<_>>()
    );
    notebook.record_assist(&hits.ids(), true)?;
    record(&mut notebook, "Two trains 42 km apart meet when?", "0")?;
    record(&mut notebook, "Two trains 42 km apart meet when?", "7")?;
    let report = notebook.promote_epoch(2, &policy, &gateway)?;
    println!(
        "epoch 2 lifecycle: promoted {:?}, retired {:?}",
        report.promoted, report.retired
    );

    // Epoch 3: with three failures, zero assists, and two epochs of age,
    // the trains record is retired — out of retrieval but never deleted.
    notebook.set_epoch(3);
    let report = notebook.promote_epoch(3, &policy, &gateway)?;
    println!(
        "epoch 3 lifecycle: promoted {:?}, retired {:?}",
        report.promoted, report.retired
    );
    let (active, promoted, retired) = notebook.counts_by_status();
    println!("counts: active {active}, promoted {promoted}, retired {retired}");
    let hits = notebook.retrieve(&gateway, "Two trains 42 km apart meet when?", 3)?;
    println!(
        "retired record excluded from retrieval: hits = {:?}",
        hits.ids()
    );
    assert!(!hits.ids().contains(&trains));

    // Snapshot and reload: same records, same statuses, verified digest.
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("epoch_3.snap");
    notebook.snapshot(3, &path)?;
    let (reloaded, epoch) = MistakeNotebook::load(&path, 0.05)?;
    println!(
        "reloaded epoch-{epoch} snapshot: {} record(s), counts {:?}",
        reloaded.len(),
        reloaded.counts_by_status()
    );
    assert_eq!(reloaded.counts_by_status(), notebook.counts_by_status());
    Ok(())
}
