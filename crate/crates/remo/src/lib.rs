//! Two-tier prompt optimization with a persistent mistake notebook.
//!
//! The training loop improves a task system prompt from model feedback alone:
//! wrong answers become retrievable mistake records that feed future
//! reasoning as in-context warnings, batch-level critiques rewrite the system
//! prompt, and an epoch-level reflection pass rewrites the instructions of
//! the prompt optimizer itself. Every model call flows through a [`gateway`]
//! that tags its purpose and logs a digest to an append-only transcript, so
//! runs against the deterministic scripted backend are byte-reproducible.
//!
//! Start with [`trainer::Trainer`] for the full loop, or the `examples/`
//! directory for one runnable program per capability.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod digest;
pub mod error;
pub mod gateway;
pub mod meta_optimizer;
pub mod notebook;
pub mod prompts;
pub mod reasoner;
pub mod report;
pub mod textgrad;
pub mod trainer;

pub use error::{Error, Result};
