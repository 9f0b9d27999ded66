//! Run event transcript: a line-delimited log of every chat call plus the
//! trainer-side events (retrieval, assists, promotions, rejected updates).
//!
//! Logical time is a monotone per-run counter, not wall clock, so two runs
//! with the same seed and script produce byte-identical transcript files.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Purpose, Usage};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    /// One per chat call: request/response digests plus token usage.
    Chat {
        purpose_tag: Purpose,
        request_sha256: String,
        response_sha256: String,
        usage: Usage,
    },
    /// A chat call that failed after retries.
    ChatError {
        purpose_tag: Purpose,
        request_sha256: String,
        error: String,
    },
    /// A notebook lookup performed for a prediction.
    Retrieval {
        phase: String,
        query_sha256: String,
        hits: Vec<u64>,
    },
    /// Query embedding failed; reasoning proceeded without context.
    RetrievalSkip { phase: String, reason: String },
    /// Retrieved records credited after a correct prediction.
    Assist { ids: Vec<u64> },
    /// Context block exceeded its budget; lowest-ranked records dropped.
    ContextTruncation { dropped: usize },
    /// A prompt rewrite was rejected (empty or oversized) and the old text kept.
    RejectedUpdate { target: String, reason: String },
    /// Epoch-boundary lifecycle pass over the notebook.
    Promotion {
        epoch: usize,
        promoted: Vec<u64>,
        retired: Vec<u64>,
        deduplicated: Vec<u64>,
    },
    /// Training resumed from a checkpoint at this epoch boundary.
    Resume { epoch: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub t_logical: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

struct LogState {
    next_t: u64,
    events: Vec<TranscriptEvent>,
    flushed: usize,
}

/// Single event sequencer shared by all gateway callers.
pub struct EventLog {
    state: Mutex<LogState>,
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new()
    }
}

impl EventLog {
    pub fn new() -> Self {
        EventLog {
            state: Mutex::new(LogState {
                next_t: 1,
                events: Vec::new(),
                flushed: 0,
            }),
        }
    }

    /// Continue a transcript: the next event gets `last_logical_time + 1`.
    pub fn resume(&self, last_logical_time: u64) {
        let mut state = self.state.lock().unwrap();
        state.next_t = last_logical_time + 1;
    }

    pub fn append(&self, body: EventBody) -> u64 {
        let mut state = self.state.lock().unwrap();
        let t = state.next_t;
        state.next_t += 1;
        state.events.push(TranscriptEvent { t_logical: t, body });
        t
    }

    pub fn append_batch(&self, bodies: Vec<EventBody>) {
        let mut state = self.state.lock().unwrap();
        for body in bodies {
            let t = state.next_t;
            state.next_t += 1;
            state.events.push(TranscriptEvent { t_logical: t, body });
        }
    }

    /// Logical time of the most recent event (0 if none yet).
    pub fn now(&self) -> u64 {
        self.state.lock().unwrap().next_t - 1
    }

    /// Append unflushed events to the transcript file in logical-time order.
    pub fn flush_to(&self, path: &Path) -> Result<usize> {
        let mut state = self.state.lock().unwrap();
        let pending = &state.events[state.flushed..];
        if pending.is_empty() {
            return Ok(0);
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::storage(path, e))?;
        let mut buf = Vec::new();
        for event in pending {
            serde_json::to_writer(&mut buf, event)
                .map_err(|e| Error::Protocol(format!("event serialization: {e}")))?;
            buf.push(b'\n');
        }
        file.write_all(&buf).map_err(|e| Error::storage(path, e))?;
        let count = pending.len();
        state.flushed = state.events.len();
        Ok(count)
    }

    pub fn chat_purposes_since(&self, mark: u64) -> Vec<Purpose> {
        let state = self.state.lock().unwrap();
        state
            .events
            .iter()
            .filter(|e| e.t_logical > mark)
            .filter_map(|e| match &e.body {
                EventBody::Chat { purpose_tag, .. } => Some(*purpose_tag),
                _ => None,
            })
            .collect()
    }

    pub fn count_since<F: FnMut(&TranscriptEvent) -> bool>(&self, mark: u64, mut pred: F) -> usize {
        let state = self.state.lock().unwrap();
        state
            .events
            .iter()
            .filter(|e| e.t_logical > mark)
            .filter(|e| pred(e))
            .count()
    }
}

/// Read a transcript file back into events.
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEvent>> {
    let file = std::fs::File::open(path).map_err(|e| Error::storage(path, e))?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::storage(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TranscriptEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("bad transcript record: {e}"),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Check that logical times start at 1 and are strictly increasing and
/// gapless.
pub fn verify_transcript(events: &[TranscriptEvent]) -> Result<()> {
    for (i, event) in events.iter().enumerate() {
        let expected = i as u64 + 1;
        if event.t_logical != expected {
            return Err(Error::Protocol(format!(
                "transcript gap: expected t_logical {expected}, found {}",
                event.t_logical
            )));
        }
    }
    Ok(())
}
