//! Run-directory layout and atomic checkpoint writes. Every file that
//! represents state is replaced via temp-file + rename, so a crash between
//! write and rename leaves the previous checkpoint intact.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Paths inside one run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.snapshot")
    }

    pub fn prompts_dir(&self) -> PathBuf {
        self.root.join("prompts")
    }

    pub fn memory_dir(&self) -> PathBuf {
        self.root.join("memory")
    }

    /// Task system prompt after epoch `t`; `t = 0` is the initial prompt.
    pub fn task_prompt(&self, t: usize) -> PathBuf {
        self.prompts_dir().join(format!("P_{t}.txt"))
    }

    /// Optimizer prompt after epoch `t`; `t = 0` is the initial prompt.
    pub fn optimizer_prompt(&self, t: usize) -> PathBuf {
        self.prompts_dir().join(format!("Q_{t}.txt"))
    }

    pub fn memory_snapshot(&self, t: usize) -> PathBuf {
        self.memory_dir().join(format!("epoch_{t}.snap"))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn transcript(&self) -> PathBuf {
        self.root.join("transcript.jsonl")
    }

    pub fn prompt_history(&self) -> PathBuf {
        self.root.join("prompt_history.jsonl")
    }

    pub fn optimizer_history(&self) -> PathBuf {
        self.root.join("optimizer_history.jsonl")
    }

    pub fn report_text(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn report_records(&self) -> PathBuf {
        self.root.join("report.jsonl")
    }

    pub fn ensure_dirs(&self) -> Result<()> {
        for dir in [&self.root, &self.prompts_dir(), &self.memory_dir()] {
            std::fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
        }
        Ok(())
    }
}

/// Replace `path` atomically: write to a sibling temp file, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::storage(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::storage(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))
}

/// Atomically replace a line-delimited JSON file with these items.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)
            .map_err(|e| Error::Config(format!("jsonl serialization: {e}")))?;
        out.push(b'\n');
    }
    atomic_write(path, &out)
}

/// Read a line-delimited JSON file; a missing file is an empty list.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::storage(path, e)),
    };
    let mut items = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            line: index + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(items)
}
