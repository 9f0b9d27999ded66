//! Release gate: one test per acceptance criterion, each ending in a
//! printed `PASS <criterion>` line with the observed evidence. Run with
//! `cargo test --test acceptance -- --nocapture` to see every line; a
//! failing criterion surfaces as the test's failure line instead.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use remo::config::{ResolvedSection, RunConfig};
use remo::dataset::{Dataset, DatasetRecord};
use remo::digest;
use remo::gateway::{
    read_transcript, EventBody, Gateway, Purpose, RemoteBackend, RemoteConfig, ScriptTable,
    ScriptedBackend,
};
use remo::notebook::{LifecyclePolicy, MistakeNotebook, RecordStatus};
use remo::report::{make_report, percent_tenths, render_gap};
use remo::trainer::{
    evaluate_dataset, read_jsonl, read_text, write_jsonl, Datasets, EpochMetrics, RunLayout,
    Trainer,
};

use common::{run_world, world_config, world_datasets, world_gateway, TOKEN};

/// Scripted closed loop: 6 train / 4 val, T=3, validation accuracy climbs
/// from 0.0 to 1.0 without ever regressing, in well under five seconds.
#[test]
fn closed_loop_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let artifacts = run_world(dir.path(), world_config());
    let elapsed = started.elapsed();

    let vals: Vec<f64> = artifacts.metrics.iter().map(|m| m.val_acc).collect();
    assert_eq!(vals.first(), Some(&0.0), "first epoch must start blind");
    assert_eq!(vals.last(), Some(&1.0), "final epoch must be perfect");
    assert!(
        vals.windows(2).all(|w| w[0] <= w[1]),
        "validation accuracy regressed: {vals:?}"
    );
    assert!(
        artifacts.prompt.contains(TOKEN),
        "final prompt lost the token the gradient asked for"
    );
    assert!(elapsed.as_secs_f64() < 5.0, "run took {elapsed:?}");
    println!("PASS closed_loop_improvement: val accuracy {vals:?} in {elapsed:.2?}");
}

/// With retrieval and the adaptive optimizer both disabled, the transcript
/// carries zero retrieval/assist events and the optimizer prompt digest
/// never moves — structurally the plain textual-gradient baseline — while
/// prompt updates themselves still land.
#[test]
fn baseline_ablation_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = world_config();
    config.retrieval.enable_rag = false;
    config.optimizer.enable_adaptive = false;
    let artifacts = run_world(dir.path(), config);

    let layout = RunLayout::new(dir.path());
    let events = read_transcript(&layout.transcript()).unwrap();
    let retrieval_events = events
        .iter()
        .filter(|e| {
            matches!(
                e.body,
                EventBody::Retrieval { .. }
                    | EventBody::RetrievalSkip { .. }
                    | EventBody::Assist { .. }
            )
        })
        .count();
    assert_eq!(retrieval_events, 0, "ablated run still touched retrieval");

    let q_digests: BTreeSet<&str> =
        artifacts.metrics.iter().map(|m| m.q_sha256.as_str()).collect();
    assert_eq!(q_digests.len(), 1, "optimizer prompt digest moved: {q_digests:?}");
    let q0 = read_text(&layout.optimizer_prompt(0)).unwrap();
    assert!(q_digests.contains(digest::sha256_hex(q0.as_bytes()).as_str()));

    assert!(
        artifacts.prompt.contains(TOKEN),
        "prompt updates must still apply when only the extras are ablated"
    );
    let report = read_text(&layout.report_text()).unwrap();
    assert!(report.contains("TextGrad"), "report row mislabels the ablation:\n{report}");
    println!(
        "PASS baseline_ablation_equivalence: 0 retrieval events, 1 optimizer digest across {} epochs",
        artifacts.metrics.len()
    );
}

fn brute_force_top_k(
    notebook: &MistakeNotebook,
    gateway: &Gateway,
    query: &str,
    k: usize,
) -> Vec<u64> {
    let query_embedding = gateway.embed(&[query]).unwrap().remove(0);
    let mut candidates: Vec<(u64, f32)> = notebook
        .records()
        .filter(|r| r.status != RecordStatus::Retired)
        .filter_map(|r| {
            r.embedding
                .as_ref()
                .map(|e| (r.id, query_embedding.cosine(e)))
        })
        .collect();
    let mut picked = Vec::new();
    while picked.len() < k && !candidates.is_empty() {
        let mut best = 0;
        for i in 1..candidates.len() {
            let better_score = candidates[i].1 > candidates[best].1;
            let tie_lower_id =
                candidates[i].1 == candidates[best].1 && candidates[i].0 < candidates[best].0;
            if better_score || tie_lower_id {
                best = i;
            }
        }
        picked.push(candidates.remove(best).0);
    }
    picked
}

/// 500 randomized trials over notebooks of up to 200 records: `retrieve`
/// must equal an independently coded exhaustive top-5 (repeated max-pick
/// with the lower id winning exact score ties). The small vocabulary makes
/// word-permutation questions collide into identical embeddings, so the
/// tie-break path is genuinely exercised.
#[test]
fn retrieval_matches_brute_force_oracle() {
    const VOCAB: [&str; 24] = [
        "train", "apples", "meters", "price", "total", "each", "left", "sold", "hours", "speed",
        "cost", "share", "twice", "half", "sum", "gallons", "boxes", "pages", "steps", "coins",
        "weeks", "rows", "pencils", "ribbon",
    ];
    let gateway = world_gateway();
    let mut rng = StdRng::seed_from_u64(0xACCE);
    let mut trials = 0;
    let mut tie_trials = 0;

    for round in 0..20 {
        let target_records = rng.gen_range(1..=200);
        let mut notebook = MistakeNotebook::new(0.0);
        for i in 0..target_records {
            let words: Vec<&str> = (0..rng.gen_range(2..=5))
                .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
                .collect();
            let question = words.join(" ");
            notebook
                .insert_mistake(
                    &gateway,
                    &question,
                    "7",
                    "9",
                    "trace",
                    BTreeMap::new(),
                    (round * 1000 + i) as u64,
                )
                .unwrap();
        }
        assert!(notebook.len() <= 200);

        for _ in 0..25 {
            let words: Vec<&str> = (0..rng.gen_range(1..=4))
                .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
                .collect();
            let query = words.join(" ");
            let got = notebook.retrieve(&gateway, &query, 5).unwrap().ids();
            let want = brute_force_top_k(&notebook, &gateway, &query, 5);
            assert_eq!(
                got, want,
                "round {round}, query {query:?}: retrieval diverged from the oracle"
            );
            trials += 1;
            let scored = notebook.retrieve(&gateway, &query, 5).unwrap();
            let mut seen = BTreeSet::new();
            if scored
                .records
                .iter()
                .any(|s| !seen.insert(s.similarity.to_bits()))
            {
                tie_trials += 1;
            }
        }
    }
    assert_eq!(trials, 500);
    assert!(tie_trials > 0, "no trial produced an exact score tie; widen the collision setup");
    println!(
        "PASS retrieval_matches_brute_force_oracle: {trials} trials, 0 mismatches ({tie_trials} with exact ties)"
    );
}

/// Lifecycle rules end to end: insert only on error, dedup by normalized
/// question, forward-only status moves, noise retirement firing exactly at
/// the default thresholds (3 failures, 0 assists, age 2), no deletion ever,
/// and a field-exact snapshot round-trip.
#[test]
fn memory_lifecycle_rules() {
    let gateway = world_gateway();
    let policy = LifecyclePolicy::default();
    assert_eq!((policy.promote_assists, policy.noise_failures, policy.noise_age_epochs), (1, 3, 2));

    let mut notebook = MistakeNotebook::new(0.25);

    // Insert only on error: a correct prediction is rejected outright.
    let rejected = notebook.insert_mistake(
        &gateway, "What is 3 + 4?", "7", "7", "trace", BTreeMap::new(), 0,
    );
    assert!(rejected.is_err(), "matching prediction must not create a record");
    assert!(notebook.is_empty());

    // Dedup by question: case and whitespace changes merge into one record.
    notebook.set_epoch(1);
    let first = notebook
        .insert_mistake(&gateway, "How many apples remain?", "7", "9", "first", BTreeMap::new(), 1)
        .unwrap();
    let merged = notebook
        .insert_mistake(&gateway, "  how   many APPLES remain? ", "7", "8", "second", BTreeMap::new(), 2)
        .unwrap();
    assert_eq!(first, merged);
    assert_eq!(notebook.len(), 1);
    let record = notebook.get(first).unwrap();
    assert_eq!(record.failure_count, 2);
    assert_eq!(record.trace, "second", "merge must keep the newest trace");

    // Boundary matrix around the retirement rule. All inserted at epoch 1
    // except `young`, which arrives one epoch later.
    let fail3 = insert_n_failures(&mut notebook, &gateway, "stubborn wrong answer", 3);
    let fail2 = insert_n_failures(&mut notebook, &gateway, "occasionally wrong answer", 2);
    let helper = insert_n_failures(&mut notebook, &gateway, "helpful wrong answer", 3);
    notebook.record_assist(&[helper], true).unwrap();
    notebook.set_epoch(2);
    let young = insert_n_failures(&mut notebook, &gateway, "recent wrong answer", 3);

    // Epoch 2: helper is promoted (assist >= 1); nothing is old enough to
    // retire (fail3 has age 1 < 2).
    let report = notebook.promote_epoch(2, &policy, &gateway).unwrap();
    assert_eq!(report.promoted, vec![helper]);
    assert!(report.retired.is_empty(), "age-1 records must survive epoch 2");

    // Epoch 3: fail3 hits the rule exactly (3 failures, 0 assists, age 2).
    // fail2 is a failure short, young an epoch short, helper protected.
    let report = notebook.promote_epoch(3, &policy, &gateway).unwrap();
    assert_eq!(report.retired, vec![fail3]);
    assert_eq!(notebook.get(fail2).unwrap().status, RecordStatus::Active);
    assert_eq!(notebook.get(young).unwrap().status, RecordStatus::Active);
    assert_eq!(notebook.get(helper).unwrap().status, RecordStatus::Promoted);

    // Epoch 4: young ages into the rule.
    let report = notebook.promote_epoch(4, &policy, &gateway).unwrap();
    assert_eq!(report.retired, vec![young]);

    // Forward-only: further failures never demote a promoted record or
    // resurrect a retired one, and nothing is ever deleted.
    let before = notebook.len();
    notebook
        .insert_mistake(&gateway, "helpful wrong answer", "7", "9", "again", BTreeMap::new(), 50)
        .unwrap();
    notebook
        .insert_mistake(&gateway, "stubborn wrong answer", "7", "9", "again", BTreeMap::new(), 51)
        .unwrap();
    notebook.promote_epoch(5, &policy, &gateway).unwrap();
    assert_eq!(notebook.get(helper).unwrap().status, RecordStatus::Promoted);
    assert_eq!(notebook.get(fail3).unwrap().status, RecordStatus::Retired);
    assert_eq!(notebook.len(), before, "records must never be deleted");
    let (active, promoted, retired) = notebook.counts_by_status();
    assert_eq!((active, promoted, retired), (2, 1, 2));

    // Snapshot round-trip is field-exact across all three statuses.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("epoch_5.snap");
    notebook.snapshot(5, &path).unwrap();
    let (loaded, epoch) = MistakeNotebook::load(&path, 0.25).unwrap();
    assert_eq!(epoch, 5);
    assert_eq!(loaded.len(), notebook.len());
    for (a, b) in notebook.records().zip(loaded.records()) {
        assert_eq!(
            serde_json::to_value(a).unwrap(),
            serde_json::to_value(b).unwrap(),
            "record {} changed across the round-trip",
            a.id
        );
    }
    println!(
        "PASS memory_lifecycle_rules: retirement fired at the exact boundary; {} records round-tripped field-exact",
        notebook.len()
    );
}

fn insert_n_failures(
    notebook: &mut MistakeNotebook,
    gateway: &Gateway,
    question: &str,
    failures: u32,
) -> u64 {
    let mut id = 0;
    for i in 0..failures {
        id = notebook
            .insert_mistake(&gateway, question, "7", "9", "trace", BTreeMap::new(), 10 + i as u64)
            .unwrap();
    }
    id
}

/// Two full runs with the same seed leave byte-identical metrics and
/// transcript files behind.
#[test]
fn same_seed_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_world(dir_a.path(), world_config());
    run_world(dir_b.path(), world_config());
    let la = RunLayout::new(dir_a.path());
    let lb = RunLayout::new(dir_b.path());

    let metrics_a = std::fs::read(la.metrics()).unwrap();
    assert_eq!(metrics_a, std::fs::read(lb.metrics()).unwrap(), "metrics diverged");
    let transcript_a = std::fs::read(la.transcript()).unwrap();
    assert_eq!(
        transcript_a,
        std::fs::read(lb.transcript()).unwrap(),
        "transcripts diverged"
    );
    println!(
        "PASS same_seed_determinism: metrics ({} bytes) and transcript ({} bytes) byte-identical",
        metrics_a.len(),
        transcript_a.len()
    );
}

fn count_files(dir: &Path, prefix: &str, suffix: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.starts_with(prefix) && name.ends_with(suffix)
        })
        .count()
}

/// A T=5 run persists exactly 6 task prompts, 6 optimizer prompts, 5
/// metrics lines, and 5 memory snapshots; stopping at every epoch boundary
/// and resuming reproduces the uninterrupted run's metrics exactly.
#[test]
fn checkpoint_completeness_and_boundary_resume() {
    let mut config = world_config();
    config.run.epochs = 5;

    let full_dir = tempfile::tempdir().unwrap();
    let full = run_world(full_dir.path(), config.clone());
    let layout = RunLayout::new(full_dir.path());

    assert_eq!(count_files(&layout.prompts_dir(), "P_", ".txt"), 6);
    assert_eq!(count_files(&layout.prompts_dir(), "Q_", ".txt"), 6);
    assert_eq!(count_files(&layout.prompts_dir(), "", ""), 12, "unexpected extra prompt files");
    assert_eq!(count_files(&layout.memory_dir(), "epoch_", ".snap"), 5);
    let metrics: Vec<EpochMetrics> = read_jsonl(&layout.metrics()).unwrap();
    assert_eq!(metrics.len(), 5);

    for stop in 1..=4 {
        let dir = tempfile::tempdir().unwrap();
        let mut stopping = config.clone();
        stopping.run.stop_after_epoch = Some(stop);
        let partial = Trainer::new(stopping, world_datasets(), world_gateway(), dir.path())
            .unwrap()
            .train()
            .unwrap();
        assert_eq!(partial.completed_epochs, stop);

        let finished = Trainer::resume(config.clone(), world_datasets(), world_gateway(), dir.path())
            .unwrap()
            .train()
            .unwrap();
        assert_eq!(
            finished.metrics, full.metrics,
            "resume after epoch {stop} diverged from the uninterrupted run"
        );
    }
    println!(
        "PASS checkpoint_completeness_and_boundary_resume: 6+6 prompts, 5 metrics lines, 5 snapshots; resume matched at all 4 boundaries"
    );
}

/// Exact-match accuracy over a hand-built split is exact (3 of 4 → 0.75),
/// and the report gap for validation 96.0 vs test 69.0 renders with the
/// typographic minus as −27.0, end to end through the report table.
#[test]
fn metric_and_gap_correctness() {
    let table = ScriptTable::new("No idea. #### 0")
        .rule(Purpose::Reasoning, "alpha", "#### 1")
        .rule(Purpose::Reasoning, "beta", "#### 2")
        .rule(Purpose::Reasoning, "gamma", "#### 3");
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new(table)), 4);
    let dataset = Dataset {
        split: "hand".to_string(),
        records: [("alpha", "1"), ("beta", "2"), ("gamma", "3"), ("delta", "4")]
            .iter()
            .enumerate()
            .map(|(i, (word, gold))| DatasetRecord {
                id: format!("hand-{i}"),
                question: format!("Question {word}: compute the value."),
                gold_raw: format!("#### {gold}"),
                gold: gold.to_string(),
            })
            .collect(),
    };
    let notebook = MistakeNotebook::new(0.0);
    let outcome = evaluate_dataset(
        &dataset,
        "hand-check",
        "Answer with '#### <number>'.",
        &notebook,
        &RunConfig::default(),
        &gateway,
    )
    .unwrap();
    assert_eq!((outcome.correct, outcome.total), (3, 4));
    assert_eq!(outcome.accuracy, 0.75, "3 of 4 must be exactly 0.75");

    let gap_tenths = percent_tenths(0.69) - percent_tenths(0.96);
    assert_eq!(render_gap(gap_tenths), "\u{2212}27.0");
    assert_eq!(render_gap(gap_tenths), "−27.0");

    let dir = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(dir.path());
    layout.ensure_dirs().unwrap();
    let mut config = RunConfig::default();
    config.resolved = Some(ResolvedSection {
        train_size: 100,
        val_size: 25,
        test_size: 25,
        backend_id: "scripted".to_string(),
        prompt_assets_version: "v1".to_string(),
    });
    config.save(&layout.config_snapshot()).unwrap();
    write_jsonl(
        &layout.metrics(),
        &[EpochMetrics {
            epoch: 1,
            train_error_rate: 0.5,
            val_acc: 0.96,
            test_acc: Some(0.69),
            p_sha256: digest::sha256_hex(b"p"),
            q_sha256: digest::sha256_hex(b"q"),
            notebook_active: 0,
            notebook_promoted: 0,
            notebook_retired: 0,
        }],
    )
    .unwrap();
    let report = make_report(&[dir.path().to_path_buf()]).unwrap();
    let rendered = report.render_table();
    assert!(rendered.contains("96.0"), "missing val column:\n{rendered}");
    assert!(rendered.contains("69.0"), "missing test column:\n{rendered}");
    assert!(rendered.contains("−27.0"), "missing signed gap:\n{rendered}");
    println!("PASS metric_and_gap_correctness: 3/4 → 0.75 exactly; (96.0, 69.0) → −27.0");
}

fn word_problems(range: std::ops::Range<usize>, name: &str) -> Dataset {
    const PROBLEMS: [(&str, i64); 20] = [
        ("A box holds 12 pencils. How many pencils are in 7 boxes?", 84),
        ("Mara reads 14 pages every day. How many pages does she read in 6 days?", 84),
        ("A rope is 45 meters long and is cut into 9 equal pieces. How long is each piece in meters?", 5),
        ("Sam had 63 coins and spent 27 of them. How many coins does Sam have left?", 36),
        ("A train travels 60 kilometers per hour for 4 hours. How many kilometers does it travel?", 240),
        ("There are 8 rows of chairs with 15 chairs in each row. How many chairs are there?", 120),
        ("Lena bought 5 notebooks at 7 dollars each. How many dollars did she spend?", 35),
        ("A tank holds 90 gallons and 34 gallons are drained. How many gallons remain?", 56),
        ("Tom walks 3 kilometers in the morning and 5 in the evening. How many kilometers in 7 days?", 56),
        ("A baker makes 24 rolls per tray and fills 6 trays. How many rolls is that?", 144),
        ("A class of 28 students splits into teams of 4. How many teams are formed?", 7),
        ("Nina saved 13 dollars each week for 9 weeks. How many dollars did she save?", 117),
        ("A shelf holds 18 books and there are 11 shelves. How many books fit?", 198),
        ("A farm has 96 eggs packed 12 to a carton. How many cartons are filled?", 8),
        ("Leo ran 400 meters each lap for 5 laps. How many meters did he run?", 2000),
        ("A movie lasts 126 minutes and 48 minutes have passed. How many minutes are left?", 78),
        ("Each bag weighs 3 kilograms. What is the weight of 17 bags in kilograms?", 51),
        ("A garden has 6 rows of 13 tulips. How many tulips are in the garden?", 78),
        ("Ava had 120 stickers and gave away 45. How many stickers does she keep?", 75),
        ("A tap fills 9 liters per minute. How many liters does it fill in 12 minutes?", 108),
    ];
    Dataset {
        split: name.to_string(),
        records: range
            .map(|i| DatasetRecord {
                id: format!("gsm-{i:03}"),
                question: PROBLEMS[i].0.to_string(),
                gold_raw: format!("#### {}", PROBLEMS[i].1),
                gold: PROBLEMS[i].1.to_string(),
            })
            .collect(),
    }
}

/// Optional live smoke: only runs when REMO_API_KEY is set. One epoch over
/// 20 small word problems against an OpenAI-compatible endpoint, asserting
/// structural invariants only — accuracies in range, checkpoints present —
/// never specific accuracy values.
#[test]
fn live_smoke_against_remote_endpoint() {
    let key = match std::env::var("REMO_API_KEY") {
        Ok(k) if !k.is_empty() => k,
        _ => {
            println!("SKIPPED live_smoke_against_remote_endpoint: REMO_API_KEY is not set");
            return;
        }
    };
    let base_url =
        std::env::var("REMO_BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".to_string());
    let model = std::env::var("REMO_MODEL").unwrap_or_else(|_| "gpt-4o-mini".to_string());
    let mut remote = RemoteConfig::new(base_url, model, key);
    if let Ok(embed_model) = std::env::var("REMO_EMBED_MODEL") {
        remote.embed_model = embed_model;
    }
    let backend = RemoteBackend::new(remote).unwrap();
    let gateway = Gateway::new(Arc::new(backend), 4);

    let datasets = Datasets {
        train: word_problems(0..12, "train"),
        val: word_problems(12..16, "val"),
        test: Some(word_problems(16..20, "test")),
    };
    let mut config = world_config();
    config.run.epochs = 1;
    config.run.batch_size = 4;

    let dir = tempfile::tempdir().unwrap();
    let artifacts = Trainer::new(config, datasets, gateway, dir.path())
        .unwrap()
        .train()
        .unwrap();

    let m = &artifacts.metrics[0];
    for (label, value) in [
        ("train_error_rate", m.train_error_rate),
        ("val_acc", m.val_acc),
        ("test_acc", m.test_acc.unwrap_or(0.0)),
    ] {
        assert!((0.0..=1.0).contains(&value), "{label} out of range: {value}");
    }
    let layout = RunLayout::new(dir.path());
    for t in 0..=1 {
        assert!(layout.task_prompt(t).exists());
        assert!(layout.optimizer_prompt(t).exists());
    }
    assert!(layout.memory_snapshot(1).exists());
    assert!(layout.transcript().exists());
    println!(
        "PASS live_smoke_against_remote_endpoint: T=1 over 20 examples, val {:.2}, test {:?}",
        m.val_acc, m.test_acc
    );
}
