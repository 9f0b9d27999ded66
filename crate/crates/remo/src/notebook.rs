//! Persistent mistake notebook: structured error records with embedding
//! retrieval, immediate correction on errors, and an epoch-boundary
//! promotion/retirement lifecycle with noise suppression.
//!
//! Records are never deleted. Retired records stay in storage and keep
//! absorbing repeat failures of the same question, but are excluded from
//! retrieval. Status moves only along active→promoted and
//! {active,promoted}→retired.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::gateway::{EmbeddingVector, Gateway};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Active,
    Promoted,
    Retired,
}

/// One mistake-notebook entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: u64,
    pub question: String,
    pub gold: String,
    pub predicted: String,
    pub trace: String,
    /// Logical time of first insertion.
    pub timestamp: u64,
    pub meta: BTreeMap<String, String>,
    /// Absent while an embedding failure is queued for retry.
    pub embedding: Option<EmbeddingVector>,
    pub status: RecordStatus,
    pub failure_count: u32,
    /// Times this record was retrieved into a subsequently correct prediction.
    pub assist_count: u32,
    /// Epoch of first insertion; drives the noise-retirement age rule.
    pub created_epoch: usize,
}

/// One retrieval hit: the record, its raw cosine similarity, and the
/// post-bonus score the ranking actually used.
#[derive(Debug, Clone)]
pub struct ScoredRecord {
    pub record: MemoryRecord,
    /// Raw cosine similarity in [-1, 1].
    pub similarity: f32,
    /// Ranking key: raw similarity plus the promotion bonus, capped at 1.0.
    pub ranking_score: f32,
}

#[derive(Debug, Clone, Default)]
pub struct RetrievalResult {
    pub records: Vec<ScoredRecord>,
    pub query_digest: String,
    /// Set when the query embedding failed and reasoning proceeds without
    /// context.
    pub skip_reason: Option<String>,
}

impl RetrievalResult {
    pub fn empty() -> Self {
        RetrievalResult::default()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.records.iter().map(|s| s.record.id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Epoch-boundary lifecycle thresholds. All config-exposed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LifecyclePolicy {
    /// Assists required to promote an active record.
    pub promote_assists: u32,
    /// Failure count at or above which an unhelpful record is noise.
    pub noise_failures: u32,
    /// Minimum age in epochs before the noise rule may retire a record.
    pub noise_age_epochs: usize,
}

impl Default for LifecyclePolicy {
    fn default() -> Self {
        LifecyclePolicy {
            promote_assists: 1,
            noise_failures: 3,
            noise_age_epochs: 2,
        }
    }
}

/// Outcome of one epoch-boundary lifecycle pass. The three id sets are
/// pairwise disjoint; promotion and retirement take precedence over the
/// dedup listing when a record qualifies for more than one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromotionReport {
    pub epoch: usize,
    pub promoted: Vec<u64>,
    pub retired: Vec<u64>,
    pub deduplicated: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotHeader {
    epoch: usize,
    dim: Option<usize>,
    count: usize,
    content_sha256: String,
}

/// The memory state: all records, the dedup index, and the embedding-retry
/// queue. Exhaustive scan retrieval; exact top-k.
pub struct MistakeNotebook {
    records: BTreeMap<u64, MemoryRecord>,
    next_id: u64,
    /// Normalized question text → record id (one record per question, ever).
    by_question: HashMap<String, u64>,
    pending_embeddings: BTreeSet<u64>,
    merged_since_promotion: BTreeSet<u64>,
    /// Ranking preference for promoted records; zero disables it.
    promoted_bonus: f32,
    current_epoch: usize,
    dim: Option<usize>,
}

/// Dedup key: lowercased, whitespace-collapsed question text.
pub fn normalize_question(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl MistakeNotebook {
    pub fn new(promoted_bonus: f32) -> Self {
        MistakeNotebook {
            records: BTreeMap::new(),
            next_id: 1,
            by_question: HashMap::new(),
            pending_embeddings: BTreeSet::new(),
            merged_since_promotion: BTreeSet::new(),
            promoted_bonus,
            current_epoch: 0,
            dim: None,
        }
    }

    /// The trainer advances this at each epoch start; new records are
    /// stamped with it.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.current_epoch = epoch;
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&MemoryRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.values()
    }

    /// (active, promoted, retired)
    pub fn counts_by_status(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for r in self.records.values() {
            match r.status {
                RecordStatus::Active => counts.0 += 1,
                RecordStatus::Promoted => counts.1 += 1,
                RecordStatus::Retired => counts.2 += 1,
            }
        }
        counts
    }

    /// Immediate correction: insert a new record for a wrong prediction, or
    /// merge into the existing record for the same normalized question
    /// (newest trace wins, failure count grows). Returns the affected id.
    ///
    /// A failed question embedding queues the record for retry at the next
    /// epoch boundary rather than dropping it; the record is excluded from
    /// retrieval until embedded.
    #[allow(clippy::too_many_arguments)]
    pub fn insert_mistake(
        &mut self,
        gateway: &Gateway,
        question: &str,
        gold: &str,
        predicted: &str,
        trace: &str,
        meta: BTreeMap<String, String>,
        logical_time: u64,
    ) -> Result<u64> {
        if predicted == gold {
            return Err(Error::Precondition(
                "insert_mistake requires predicted != gold".into(),
            ));
        }
        let key = normalize_question(question);
        if let Some(&id) = self.by_question.get(&key) {
            let record = self.records.get_mut(&id).expect("indexed record exists");
            record.trace = trace.to_string();
            record.failure_count += 1;
            self.merged_since_promotion.insert(id);
            return Ok(id);
        }
        let embedding = match gateway.embed(&[question]) {
            Ok(mut vs) => {
                let v = vs.remove(0);
                self.check_dim(v.dim())?;
                Some(v)
            }
            Err(_) => None,
        };
        let id = self.next_id;
        self.next_id += 1;
        if embedding.is_none() {
            self.pending_embeddings.insert(id);
        }
        self.records.insert(
            id,
            MemoryRecord {
                id,
                question: question.to_string(),
                gold: gold.to_string(),
                predicted: predicted.to_string(),
                trace: trace.to_string(),
                timestamp: logical_time,
                meta,
                embedding,
                status: RecordStatus::Active,
                failure_count: 1,
                assist_count: 0,
                created_epoch: self.current_epoch,
            },
        );
        self.by_question.insert(key, id);
        Ok(id)
    }

    fn check_dim(&mut self, dim: usize) -> Result<()> {
        match self.dim {
            None => {
                self.dim = Some(dim);
                Ok(())
            }
            Some(d) if d == dim => Ok(()),
            Some(d) => Err(Error::EmbeddingFailure(format!(
                "embedding dim {dim} does not match index dim {d}"
            ))),
        }
    }

    /// Exact top-k over non-retired embedded records by cosine similarity.
    /// Promoted records get the ranking bonus; ties break by ascending id.
    /// An empty notebook (cold start) returns an empty result, and a failed
    /// query embedding returns an empty result with `skip_reason` set.
    pub fn retrieve(&self, gateway: &Gateway, query: &str, k: usize) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(Error::Precondition("retrieve requires k >= 1".into()));
        }
        if self.records.is_empty() {
            return Ok(RetrievalResult::empty());
        }
        let query_embedding = match gateway.embed(&[query]) {
            Ok(mut vs) => vs.remove(0),
            Err(e) => {
                return Ok(RetrievalResult {
                    records: Vec::new(),
                    query_digest: digest::sha256_hex(query.as_bytes()),
                    skip_reason: Some(e.to_string()),
                })
            }
        };
        let mut scored: Vec<ScoredRecord> = self
            .records
            .values()
            .filter(|r| r.status != RecordStatus::Retired)
            .filter_map(|r| {
                let embedding = r.embedding.as_ref()?;
                let similarity = query_embedding.cosine(embedding);
                let ranking_score = if r.status == RecordStatus::Promoted {
                    (similarity + self.promoted_bonus).min(1.0)
                } else {
                    similarity
                };
                Some(ScoredRecord {
                    record: r.clone(),
                    similarity,
                    ranking_score,
                })
            })
            .collect();
        scored.sort_by(|a, b| {
            b.ranking_score
                .partial_cmp(&a.ranking_score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.record.id.cmp(&b.record.id))
        });
        scored.truncate(k);
        Ok(RetrievalResult {
            records: scored,
            query_digest: digest::sha256_hex(query.as_bytes()),
            skip_reason: None,
        })
    }

    /// Credit retrieved records after a correct prediction. Returns the
    /// number of counters updated (0 when the prediction was wrong).
    pub fn record_assist(&mut self, ids: &[u64], prediction_correct: bool) -> Result<usize> {
        for &id in ids {
            if !self.records.contains_key(&id) {
                return Err(Error::UnknownId(id));
            }
        }
        if !prediction_correct {
            return Ok(0);
        }
        for &id in ids {
            self.records.get_mut(&id).expect("checked above").assist_count += 1;
        }
        Ok(ids.len())
    }

    /// Epoch-boundary lifecycle pass:
    /// (a) active records with enough assists are promoted;
    /// (b) active records that keep failing, never assisted, and old enough
    ///     are retired (noise suppression);
    /// (c) queued embedding failures are retried.
    /// Retired records are excluded from retrieval but never deleted.
    pub fn promote_epoch(
        &mut self,
        epoch: usize,
        policy: &LifecyclePolicy,
        gateway: &Gateway,
    ) -> Result<PromotionReport> {
        // Retry queued embeddings first so late vectors rejoin the index.
        let pending: Vec<u64> = self.pending_embeddings.iter().copied().collect();
        for id in pending {
            let question = self.records[&id].question.clone();
            if let Ok(mut vs) = gateway.embed(&[question.as_str()]) {
                let v = vs.remove(0);
                self.check_dim(v.dim())?;
                self.records.get_mut(&id).expect("pending record exists").embedding = Some(v);
                self.pending_embeddings.remove(&id);
            }
        }

        let mut promoted = Vec::new();
        for record in self.records.values_mut() {
            if record.status == RecordStatus::Active && record.assist_count >= policy.promote_assists
            {
                record.status = RecordStatus::Promoted;
                promoted.push(record.id);
            }
        }
        let mut retired = Vec::new();
        for record in self.records.values_mut() {
            if record.status == RecordStatus::Active
                && record.failure_count >= policy.noise_failures
                && record.assist_count == 0
                && epoch.saturating_sub(record.created_epoch) >= policy.noise_age_epochs
            {
                record.status = RecordStatus::Retired;
                retired.push(record.id);
            }
        }
        let deduplicated: Vec<u64> = self
            .merged_since_promotion
            .iter()
            .copied()
            .filter(|id| !promoted.contains(id) && !retired.contains(id))
            .collect();
        self.merged_since_promotion.clear();
        Ok(PromotionReport {
            epoch,
            promoted,
            retired,
            deduplicated,
        })
    }

    /// Write the full state as a header line plus one JSON record per line.
    /// The header carries a digest of the record bytes for corruption checks.
    pub fn snapshot(&self, epoch: usize, path: &Path) -> Result<()> {
        let mut content = Vec::new();
        for record in self.records.values() {
            serde_json::to_writer(&mut content, record)
                .map_err(|e| Error::CorruptSnapshot(format!("record serialization: {e}")))?;
            content.push(b'\n');
        }
        let header = SnapshotHeader {
            epoch,
            dim: self.dim,
            count: self.records.len(),
            content_sha256: digest::sha256_hex(&content),
        };
        let mut buf = serde_json::to_vec(&header)
            .map_err(|e| Error::CorruptSnapshot(format!("header serialization: {e}")))?;
        buf.push(b'\n');
        buf.extend_from_slice(&content);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &buf).map_err(|e| Error::storage(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::storage(path, e))?;
        Ok(())
    }

    /// Load a snapshot, verifying the content digest. Returns the notebook
    /// and the epoch recorded in the header.
    pub fn load(path: &Path, promoted_bonus: f32) -> Result<(Self, usize)> {
        let file = File::open(path).map_err(|e| Error::storage(path, e))?;
        let mut reader = BufReader::new(file);
        let mut header_line = String::new();
        reader
            .read_line(&mut header_line)
            .map_err(|e| Error::storage(path, e))?;
        if header_line.trim().is_empty() {
            return Err(Error::CorruptSnapshot("missing header line".into()));
        }
        let header: SnapshotHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::CorruptSnapshot(format!("bad header: {e}")))?;
        let mut content = Vec::new();
        std::io::Read::read_to_end(&mut reader, &mut content)
            .map_err(|e| Error::storage(path, e))?;
        let actual = digest::sha256_hex(&content);
        if actual != header.content_sha256 {
            return Err(Error::CorruptSnapshot(format!(
                "content digest mismatch: header {}, actual {actual}",
                header.content_sha256
            )));
        }
        let mut notebook = MistakeNotebook::new(promoted_bonus);
        notebook.dim = header.dim;
        for (i, line) in content.split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let record: MemoryRecord =
                serde_json::from_slice(line).map_err(|e| Error::Parse {
                    line: i + 2,
                    message: format!("bad snapshot record: {e}"),
                })?;
            if record.embedding.is_none() {
                notebook.pending_embeddings.insert(record.id);
            }
            notebook
                .by_question
                .insert(normalize_question(&record.question), record.id);
            notebook.next_id = notebook.next_id.max(record.id + 1);
            notebook.records.insert(record.id, record);
        }
        if notebook.records.len() != header.count {
            return Err(Error::CorruptSnapshot(format!(
                "header count {} != record count {}",
                header.count,
                notebook.records.len()
            )));
        }
        Ok((notebook, header.epoch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptTable, ScriptedBackend};
    use std::sync::Arc;

    fn gateway() -> Gateway {
        Gateway::new(
            Arc::new(ScriptedBackend::new(ScriptTable::new("UNKNOWN"))),
            4,
        )
    }

    fn insert(
        nb: &mut MistakeNotebook,
        gw: &Gateway,
        q: &str,
        gold: &str,
        pred: &str,
        t: u64,
    ) -> u64 {
        nb.insert_mistake(gw, q, gold, pred, "trace", BTreeMap::new(), t)
            .unwrap()
    }

    #[test]
    fn first_insertion_creates_active_record() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        let id = insert(&mut nb, &gw, "Q1", "4", "5", 1);
        let r = nb.get(id).unwrap();
        assert_eq!(r.failure_count, 1);
        assert_eq!(r.status, RecordStatus::Active);
        assert!(r.embedding.is_some());
    }

    #[test]
    fn same_question_merges_in_place() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        let id1 = insert(&mut nb, &gw, "Q1", "4", "5", 1);
        let id2 = nb
            .insert_mistake(&gw, "Q1", "4", "6", "newer trace", BTreeMap::new(), 2)
            .unwrap();
        assert_eq!(id1, id2);
        assert_eq!(nb.len(), 1);
        let r = nb.get(id1).unwrap();
        assert_eq!(r.failure_count, 2);
        assert_eq!(r.trace, "newer trace");
    }

    #[test]
    fn dedup_key_ignores_case_and_whitespace() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        let a = insert(&mut nb, &gw, "What is  2+2?", "4", "5", 1);
        let b = insert(&mut nb, &gw, "what is 2+2?", "4", "3", 2);
        assert_eq!(a, b);
    }

    #[test]
    fn correct_prediction_rejected_at_insert() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        let err = nb.insert_mistake(&gw, "Q", "4", "4", "t", BTreeMap::new(), 1);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn cold_start_retrieval_is_empty() {
        let gw = gateway();
        let nb = MistakeNotebook::new(0.05);
        let result = nb.retrieve(&gw, "anything", 5).unwrap();
        assert!(result.is_empty());
        assert!(result.skip_reason.is_none());
    }

    #[test]
    fn retrieval_returns_min_k_eligible() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        for (i, q) in ["alpha beta", "gamma delta", "epsilon zeta"].iter().enumerate() {
            insert(&mut nb, &gw, q, "1", "2", i as u64);
        }
        let result = nb.retrieve(&gw, "alpha", 5).unwrap();
        assert_eq!(result.records.len(), 3);
        for pair in result.records.windows(2) {
            assert!(pair[0].ranking_score >= pair[1].ranking_score);
        }
    }

    #[test]
    fn zero_k_rejected() {
        let gw = gateway();
        let nb = MistakeNotebook::new(0.05);
        assert!(nb.retrieve(&gw, "q", 0).is_err());
    }

    #[test]
    fn assist_updates_only_on_correct() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        let a = insert(&mut nb, &gw, "q one", "1", "2", 1);
        let b = insert(&mut nb, &gw, "q two", "1", "3", 2);
        assert_eq!(nb.record_assist(&[a, b], false).unwrap(), 0);
        assert_eq!(nb.get(a).unwrap().assist_count, 0);
        assert_eq!(nb.record_assist(&[a, b], true).unwrap(), 2);
        assert_eq!(nb.get(a).unwrap().assist_count, 1);
        assert_eq!(nb.get(b).unwrap().assist_count, 1);
        assert_eq!(nb.record_assist(&[], true).unwrap(), 0);
    }

    #[test]
    fn unknown_id_in_assist() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        insert(&mut nb, &gw, "q", "1", "2", 1);
        assert!(matches!(
            nb.record_assist(&[99], true),
            Err(Error::UnknownId(99))
        ));
    }

    #[test]
    fn assisted_record_promotes() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        let id = insert(&mut nb, &gw, "q", "1", "2", 1);
        nb.record_assist(&[id], true).unwrap();
        let report = nb
            .promote_epoch(1, &LifecyclePolicy::default(), &gw)
            .unwrap();
        assert_eq!(report.promoted, vec![id]);
        assert_eq!(nb.get(id).unwrap().status, RecordStatus::Promoted);
    }

    #[test]
    fn fresh_record_unchanged_by_lifecycle() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        nb.set_epoch(1);
        let id = insert(&mut nb, &gw, "q", "1", "2", 1);
        let report = nb
            .promote_epoch(1, &LifecyclePolicy::default(), &gw)
            .unwrap();
        assert!(report.promoted.is_empty());
        assert!(report.retired.is_empty());
        assert_eq!(nb.get(id).unwrap().status, RecordStatus::Active);
    }

    #[test]
    fn noise_rule_retires_old_unhelpful_repeat_failures() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        nb.set_epoch(1);
        let id = insert(&mut nb, &gw, "q", "1", "2", 1);
        nb.set_epoch(2);
        insert(&mut nb, &gw, "q", "1", "3", 2);
        nb.set_epoch(3);
        insert(&mut nb, &gw, "q", "1", "5", 3);
        // failure_count 3, assist 0, age = 3 - 1 = 2.
        let report = nb
            .promote_epoch(3, &LifecyclePolicy::default(), &gw)
            .unwrap();
        assert_eq!(report.retired, vec![id]);
        assert_eq!(nb.get(id).unwrap().status, RecordStatus::Retired);
        // Excluded from retrieval afterwards.
        let result = nb.retrieve(&gw, "q", 5).unwrap();
        assert!(result.is_empty());
    }

    #[test]
    fn noise_rule_needs_all_three_conditions() {
        let gw = gateway();
        let policy = LifecyclePolicy::default();

        // Too young: failures 3 but age 0.
        let mut nb = MistakeNotebook::new(0.05);
        nb.set_epoch(1);
        let id = insert(&mut nb, &gw, "q", "1", "2", 1);
        insert(&mut nb, &gw, "q", "1", "3", 2);
        insert(&mut nb, &gw, "q", "1", "5", 3);
        nb.promote_epoch(1, &policy, &gw).unwrap();
        assert_eq!(nb.get(id).unwrap().status, RecordStatus::Active);

        // Assisted records never retire, they promote.
        let mut nb = MistakeNotebook::new(0.05);
        nb.set_epoch(1);
        let id = insert(&mut nb, &gw, "q", "1", "2", 1);
        insert(&mut nb, &gw, "q", "1", "3", 2);
        insert(&mut nb, &gw, "q", "1", "5", 3);
        nb.record_assist(&[id], true).unwrap();
        let report = nb.promote_epoch(3, &policy, &gw).unwrap();
        assert_eq!(report.promoted, vec![id]);
        assert!(report.retired.is_empty());

        // Too few failures: 2 < 3 even when old enough.
        let mut nb = MistakeNotebook::new(0.05);
        nb.set_epoch(1);
        let id = insert(&mut nb, &gw, "q", "1", "2", 1);
        insert(&mut nb, &gw, "q", "1", "3", 2);
        nb.promote_epoch(3, &policy, &gw).unwrap();
        assert_eq!(nb.get(id).unwrap().status, RecordStatus::Active);
    }

    #[test]
    fn retired_record_keeps_absorbing_failures() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        nb.set_epoch(1);
        let id = insert(&mut nb, &gw, "q", "1", "2", 1);
        insert(&mut nb, &gw, "q", "1", "3", 2);
        insert(&mut nb, &gw, "q", "1", "5", 3);
        nb.promote_epoch(3, &LifecyclePolicy::default(), &gw).unwrap();
        assert_eq!(nb.get(id).unwrap().status, RecordStatus::Retired);
        // Re-failing the same question merges into the retired record
        // instead of growing the notebook.
        let again = insert(&mut nb, &gw, "q", "1", "9", 4);
        assert_eq!(again, id);
        assert_eq!(nb.len(), 1);
        assert_eq!(nb.get(id).unwrap().status, RecordStatus::Retired);
        assert_eq!(nb.get(id).unwrap().failure_count, 4);
    }

    #[test]
    fn promotion_report_sets_disjoint() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        nb.set_epoch(1);
        let merged = insert(&mut nb, &gw, "merge me", "1", "2", 1);
        insert(&mut nb, &gw, "merge me", "1", "3", 2);
        let promoted = insert(&mut nb, &gw, "promote me", "1", "2", 3);
        nb.record_assist(&[promoted], true).unwrap();
        let report = nb
            .promote_epoch(1, &LifecyclePolicy::default(), &gw)
            .unwrap();
        assert_eq!(report.promoted, vec![promoted]);
        assert_eq!(report.deduplicated, vec![merged]);
        for id in &report.promoted {
            assert!(!report.retired.contains(id));
            assert!(!report.deduplicated.contains(id));
        }
    }

    #[test]
    fn snapshot_round_trip_empty() {
        let gw = gateway();
        let _ = gw;
        let nb = MistakeNotebook::new(0.05);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("epoch_0.snap");
        nb.snapshot(0, &path).unwrap();
        let (loaded, epoch) = MistakeNotebook::load(&path, 0.05).unwrap();
        assert_eq!(epoch, 0);
        assert!(loaded.is_empty());
    }

    #[test]
    fn snapshot_round_trip_preserves_every_field() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        nb.set_epoch(1);
        for i in 0..10 {
            let mut meta = BTreeMap::new();
            meta.insert("split".to_string(), "train".to_string());
            nb.insert_mistake(
                &gw,
                &format!("question number {i}"),
                "1",
                &format!("{}", i + 2),
                &format!("trace {i}"),
                meta,
                i,
            )
            .unwrap();
        }
        let ids: Vec<u64> = nb.records().map(|r| r.id).collect();
        nb.record_assist(&ids[..3], true).unwrap();
        nb.promote_epoch(1, &LifecyclePolicy::default(), &gw).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("epoch_1.snap");
        nb.snapshot(1, &path).unwrap();
        let (loaded, epoch) = MistakeNotebook::load(&path, 0.05).unwrap();
        assert_eq!(epoch, 1);
        assert_eq!(loaded.len(), nb.len());
        for original in nb.records() {
            let restored = loaded.get(original.id).unwrap();
            assert_eq!(restored.question, original.question);
            assert_eq!(restored.gold, original.gold);
            assert_eq!(restored.predicted, original.predicted);
            assert_eq!(restored.trace, original.trace);
            assert_eq!(restored.timestamp, original.timestamp);
            assert_eq!(restored.meta, original.meta);
            assert_eq!(restored.embedding, original.embedding);
            assert_eq!(restored.status, original.status);
            assert_eq!(restored.failure_count, original.failure_count);
            assert_eq!(restored.assist_count, original.assist_count);
            assert_eq!(restored.created_epoch, original.created_epoch);
        }
    }

    #[test]
    fn truncated_snapshot_detected() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        for i in 0..4 {
            insert(&mut nb, &gw, &format!("unique q {i}"), "1", "2", i);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("epoch.snap");
        nb.snapshot(1, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 20]).unwrap();
        assert!(matches!(
            MistakeNotebook::load(&path, 0.05),
            Err(Error::CorruptSnapshot(_))
        ));
    }

    #[test]
    fn loaded_notebook_continues_id_sequence() {
        let gw = gateway();
        let mut nb = MistakeNotebook::new(0.05);
        insert(&mut nb, &gw, "first", "1", "2", 1);
        insert(&mut nb, &gw, "second", "1", "2", 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.snap");
        nb.snapshot(1, &path).unwrap();
        let (mut loaded, _) = MistakeNotebook::load(&path, 0.05).unwrap();
        let id = insert(&mut loaded, &gw, "third", "1", "2", 3);
        assert_eq!(id, 3);
    }
}
