//! Command-line entry points: dataset ingestion, training, evaluation,
//! run comparison, memory inspection, and transcript replay. Every verb
//! maps failures to process exit codes through [`Error::exit_code`].

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::dataset::{self, Dataset, Manifest};
use crate::error::{Error, Result};
use crate::gateway::{read_transcript, EventBody};
use crate::notebook::MistakeNotebook;
use crate::report;
use crate::trainer::{evaluate_dataset, read_text, Datasets, RunLayout, Trainer};

#[derive(Parser)]
#[command(name = "remo", version, about = "Two-tier prompt optimization with a mistake notebook")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Normalize a line-delimited question/answer file into a split.
    Ingest {
        /// Source file: one JSON record per line.
        #[arg(long)]
        input: PathBuf,
        /// Split name recorded in the manifest (train, val, test, ...).
        #[arg(long)]
        split: String,
        /// Directory receiving <split>.jsonl and <split>.manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
        /// Keep only a seeded random subset of this size.
        #[arg(long)]
        subsample: Option<usize>,
        /// Seed for the subsample selection.
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Run the training loop described by a config file.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Run directory for checkpoints, metrics, transcript, and report.
        #[arg(long)]
        run_dir: PathBuf,
        /// Continue from the run directory's last completed epoch.
        #[arg(long)]
        resume: bool,
    },
    /// Score a prompt against one split without training.
    Eval {
        /// TOML run configuration (backend, retrieval, dataset paths).
        #[arg(long)]
        config: PathBuf,
        /// Which configured split to score.
        #[arg(long)]
        split: String,
        /// Prompt text file; defaults to the configured initial prompt.
        #[arg(long)]
        prompt_file: Option<PathBuf>,
        /// Memory snapshot providing retrieval context; defaults to empty.
        #[arg(long)]
        memory_snapshot: Option<PathBuf>,
    },
    /// Compare finished runs in one table.
    Report {
        /// Run directories, one table row each.
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Also write the aligned table to this file.
        #[arg(long)]
        text_out: Option<PathBuf>,
        /// Also write line-delimited records to this file.
        #[arg(long)]
        records_out: Option<PathBuf>,
    },
    /// List a run's memory snapshot; with a query, show what retrieval
    /// would return.
    InspectMemory {
        /// Run directory holding memory/epoch_<t> snapshots.
        #[arg(long)]
        run_dir: PathBuf,
        /// Epoch whose snapshot to open.
        #[arg(long)]
        epoch: usize,
        /// Question to embed and rank records against.
        #[arg(long)]
        query: Option<String>,
        /// Config file; required with --query to build the embedding backend.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Records to show for a query; defaults to the config's top_k.
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Re-read a run's transcript, verify the logical clock, and print
    /// every event.
    ReplayTranscript {
        /// Run directory holding transcript.jsonl.
        #[arg(long)]
        run_dir: PathBuf,
        /// Print only the summary line, not each event.
        #[arg(long)]
        summary_only: bool,
    },
}

/// Dispatch a parsed command, writing human output to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            split,
            out_dir,
            subsample,
            seed,
        } => cmd_ingest(&input, &split, &out_dir, subsample, seed),
        Command::Train {
            config,
            run_dir,
            resume,
        } => cmd_train(&config, &run_dir, resume),
        Command::Eval {
            config,
            split,
            prompt_file,
            memory_snapshot,
        } => cmd_eval(&config, &split, prompt_file.as_deref(), memory_snapshot.as_deref()),
        Command::Report {
            run_dirs,
            text_out,
            records_out,
        } => cmd_report(&run_dirs, text_out.as_deref(), records_out.as_deref()),
        Command::InspectMemory {
            run_dir,
            epoch,
            query,
            config,
            top_k,
        } => cmd_inspect_memory(&run_dir, epoch, query.as_deref(), config.as_deref(), top_k),
        Command::ReplayTranscript {
            run_dir,
            summary_only,
        } => cmd_replay_transcript(&run_dir, summary_only),
    }
}

fn cmd_ingest(
    input: &Path,
    split: &str,
    out_dir: &Path,
    subsample: Option<usize>,
    seed: u64,
) -> Result<()> {
    let (mut ds, mut manifest) = dataset::ingest(input, split)?;
    if let Some(n) = subsample {
        let (sub, sub_manifest) = dataset::subsample(&ds, &manifest, n, seed);
        ds = sub;
        manifest = sub_manifest;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::storage(out_dir, e))?;
    let records_path = out_dir.join(format!("{split}.jsonl"));
    let manifest_path = out_dir.join(format!("{split}.manifest.json"));
    dataset::write_records(&ds, &records_path)?;
    manifest.save(&manifest_path)?;
    println!(
        "ingested {} record(s) into {} (digest {})",
        ds.len(),
        records_path.display(),
        &manifest.content_sha256[..12]
    );
    Ok(())
}

fn load_split(config: &RunConfig, name: &str) -> Result<(Dataset, Manifest)> {
    let path = match name {
        "train" => config.dataset.train.as_ref(),
        "val" => config.dataset.val.as_ref(),
        "test" => config.dataset.test.as_ref(),
        other => {
            return Err(Error::Config(format!(
                "unknown split '{other}' (expected train, val, or test)"
            )))
        }
    };
    let path = path.ok_or_else(|| Error::Config(format!("dataset.{name} path not configured")))?;
    dataset::ingest(path, name)
}

fn load_datasets(config: &RunConfig) -> Result<Datasets> {
    let (mut train, manifest) = load_split(config, "train")?;
    if let Some(n) = config.dataset.subsample_train {
        train = dataset::subsample(&train, &manifest, n, config.run.seed).0;
    }
    let (val, _) = load_split(config, "val")?;
    let test = match &config.dataset.test {
        Some(_) => Some(load_split(config, "test")?.0),
        None => None,
    };
    Ok(Datasets { train, val, test })
}

fn cmd_train(config_path: &Path, run_dir: &Path, resume: bool) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    config.validate()?;
    let datasets = load_datasets(&config)?;
    let gateway = config.build_gateway()?;
    let mut trainer = if resume {
        Trainer::resume(config, datasets, gateway, run_dir)?
    } else {
        Trainer::new(config, datasets, gateway, run_dir)?
    };
    let artifacts = trainer.train()?;
    for m in &artifacts.metrics {
        let test = m
            .test_acc
            .map(|a| format!(" test_acc {a:.4}"))
            .unwrap_or_default();
        println!(
            "epoch {}: train_err {:.4} val_acc {:.4}{} notebook {}a/{}p/{}r",
            m.epoch,
            m.train_error_rate,
            m.val_acc,
            test,
            m.notebook_active,
            m.notebook_promoted,
            m.notebook_retired
        );
    }
    let layout = RunLayout::new(run_dir);
    print!("{}", read_text(&layout.report_text())?);
    println!("run directory: {}", run_dir.display());
    Ok(())
}

fn cmd_eval(
    config_path: &Path,
    split: &str,
    prompt_file: Option<&Path>,
    memory_snapshot: Option<&Path>,
) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    config.validate()?;
    let (dataset, _) = load_split(&config, split)?;
    let gateway = config.build_gateway()?;
    let prompt = match prompt_file {
        Some(path) => read_text(path)?,
        None => config.initial_task_prompt().to_string(),
    };
    let notebook = match memory_snapshot {
        Some(path) => MistakeNotebook::load(path, config.retrieval.promoted_bonus)?.0,
        None => MistakeNotebook::new(config.retrieval.promoted_bonus),
    };
    let outcome = evaluate_dataset(&dataset, split, &prompt, &notebook, &config, &gateway)?;
    println!(
        "{split}: accuracy {:.4} ({} of {} correct, {} transport failure(s))",
        outcome.accuracy, outcome.correct, outcome.total, outcome.transport_failures
    );
    Ok(())
}

fn cmd_report(
    run_dirs: &[PathBuf],
    text_out: Option<&Path>,
    records_out: Option<&Path>,
) -> Result<()> {
    let report = report::make_report(run_dirs)?;
    let table = report.render_table();
    print!("{table}");
    if let Some(path) = text_out {
        std::fs::write(path, &table).map_err(|e| Error::storage(path, e))?;
    }
    if let Some(path) = records_out {
        std::fs::write(path, report.to_records()?).map_err(|e| Error::storage(path, e))?;
    }
    Ok(())
}

fn cmd_inspect_memory(
    run_dir: &Path,
    epoch: usize,
    query: Option<&str>,
    config_path: Option<&Path>,
    top_k: Option<usize>,
) -> Result<()> {
    let layout = RunLayout::new(run_dir);
    let path = layout.memory_snapshot(epoch);
    let notebook = if path.exists() {
        let (notebook, snapshot_epoch) = MistakeNotebook::load(&path, 0.05)?;
        debug_assert_eq!(snapshot_epoch, epoch);
        notebook
    } else if epoch == 0 {
        // A run that started from empty memory writes no epoch-0 snapshot.
        MistakeNotebook::new(0.05)
    } else {
        return Err(Error::NotFound(format!(
            "no memory snapshot for epoch {epoch} in {}",
            run_dir.display()
        )));
    };
    let (active, promoted, retired) = notebook.counts_by_status();
    println!(
        "{} record(s) (active {active}, promoted {promoted}, retired {retired})",
        notebook.len()
    );
    for record in notebook.records() {
        println!(
            "  #{} [{:?}] failures={} assists={} q: {}",
            record.id,
            record.status,
            record.failure_count,
            record.assist_count,
            excerpt(&record.question, 60)
        );
    }
    if let Some(query) = query {
        let config_path = config_path.ok_or_else(|| {
            Error::Config("--query needs --config to build the embedding backend".into())
        })?;
        let config = RunConfig::load(config_path)?;
        let gateway = config.build_gateway()?;
        let k = top_k.unwrap_or(config.retrieval.top_k);
        let result = notebook.retrieve(&gateway, query, k)?;
        match result.skip_reason {
            Some(reason) => println!("retrieval skipped: {reason}"),
            None => {
                println!("top {} for query {:?}:", result.records.len(), query);
                for scored in &result.records {
                    println!(
                        "  #{} similarity={:.4} ranking={:.4} q: {}",
                        scored.record.id,
                        scored.similarity,
                        scored.ranking_score,
                        excerpt(&scored.record.question, 60)
                    );
                }
            }
        }
    }
    Ok(())
}

fn cmd_replay_transcript(run_dir: &Path, summary_only: bool) -> Result<()> {
    let layout = RunLayout::new(run_dir);
    let events = read_transcript(&layout.transcript())?;
    let mut chats = 0usize;
    let mut retrievals = 0usize;
    let mut rejections = 0usize;
    for event in &events {
        match &event.body {
            EventBody::Chat { .. } | EventBody::ChatError { .. } => chats += 1,
            EventBody::Retrieval { .. } | EventBody::RetrievalSkip { .. } => retrievals += 1,
            EventBody::RejectedUpdate { .. } => rejections += 1,
            _ => {}
        }
        if !summary_only {
            let line = serde_json::to_string(event)
                .map_err(|e| Error::Protocol(format!("transcript event rendering: {e}")))?;
            println!("{line}");
        }
    }
    println!(
        "{} event(s), clock 1..={}; {chats} chat(s), {retrievals} retrieval(s), {rejections} rejected update(s)",
        events.len(),
        events.last().map(|e| e.t_logical).unwrap_or(0)
    );
    Ok(())
}

fn excerpt(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let cut: String = text.chars().take(max_chars).collect();
    format!("{cut}...")
}
