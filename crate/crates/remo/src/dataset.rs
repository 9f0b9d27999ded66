//! Dataset ingestion: line-delimited question/answer records with gold
//! answers normalized to the canonical numeric form used for exact-match
//! scoring, plus a manifest that pins the source content digest and any
//! seeded subsampling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::reasoner::{is_canonical_number, normalize_answer, ANSWER_MARKER, NO_ANSWER};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    /// Answer text as found in the source file.
    pub gold_raw: String,
    /// Canonical numeric gold answer.
    pub gold: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub split: String,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub n: usize,
    pub seed: u64,
}

/// What was ingested: source identity by content digest, record count, and
/// the subsample parameters if any. Re-ingesting the same file yields an
/// identical digest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub split: String,
    pub source_path: String,
    pub count: usize,
    pub content_sha256: String,
    pub subsample: Option<SubsampleSpec>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::storage(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: 0,
            message: format!("bad manifest: {e}"),
        })
    }
}

/// Raw input line. Either a source record with an `answer` whose gold
/// follows the "####" delimiter, or an already-ingested record carrying a
/// pre-normalized `gold` field.
#[derive(Debug, Deserialize)]
struct RawLine {
    id: Option<String>,
    question: String,
    answer: Option<String>,
    gold_raw: Option<String>,
    gold: Option<String>,
}

fn gold_from_answer(answer: &str) -> String {
    let tail = match answer.rfind(ANSWER_MARKER) {
        Some(pos) => &answer[pos + ANSWER_MARKER.len()..],
        None => answer,
    };
    normalize_answer(tail.trim())
}

/// Ingest a line-delimited dataset file. Each line needs a question and
/// either an `answer` (gold taken after the "####" delimiter and
/// normalized) or a pre-normalized `gold`. Ids default to
/// `<split>-<line number>`; explicit ids must be unique.
pub fn ingest(path: &Path, split: &str) -> Result<(Dataset, Manifest)> {
    let bytes = std::fs::read(path).map_err(|e| Error::storage(path, e))?;
    let content_sha256 = digest::sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;
    let mut records = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let (gold_raw, gold) = match (&raw.gold, &raw.answer) {
            (Some(gold), _) => (
                raw.gold_raw.clone().unwrap_or_else(|| gold.clone()),
                normalize_answer(gold),
            ),
            (None, Some(answer)) => (answer.clone(), gold_from_answer(answer)),
            (None, None) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "record has neither `answer` nor `gold`".to_string(),
                })
            }
        };
        if gold == NO_ANSWER || !is_canonical_number(&gold) {
            return Err(Error::Parse {
                line: line_no,
                message: "gold answer has no numeric value".to_string(),
            });
        }
        let id = raw.id.unwrap_or_else(|| format!("{split}-{line_no:05}"));
        if !seen_ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        records.push(DatasetRecord {
            id,
            question: raw.question,
            gold_raw,
            gold,
        });
    }
    let manifest = Manifest {
        split: split.to_string(),
        source_path: path.display().to_string(),
        count: records.len(),
        content_sha256,
        subsample: None,
    };
    Ok((
        Dataset {
            split: split.to_string(),
            records,
        },
        manifest,
    ))
}

/// Seeded selection of `n` records, keeping source order. The same
/// (file, n, seed) always selects the same ids.
pub fn subsample(dataset: &Dataset, manifest: &Manifest, n: usize, seed: u64) -> (Dataset, Manifest) {
    if n >= dataset.records.len() {
        let mut manifest = manifest.clone();
        manifest.subsample = Some(SubsampleSpec {
            n: dataset.records.len(),
            seed,
        });
        return (dataset.clone(), manifest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..dataset.records.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(n);
    indices.sort_unstable();
    let records: Vec<DatasetRecord> = indices
        .iter()
        .map(|&i| dataset.records[i].clone())
        .collect();
    let mut manifest = manifest.clone();
    manifest.count = records.len();
    manifest.subsample = Some(SubsampleSpec { n, seed });
    (
        Dataset {
            split: dataset.split.clone(),
            records,
        },
        manifest,
    )
}

/// Write records as line-delimited JSON (the shape `ingest` reads back).
pub fn write_records(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for record in &dataset.records {
        out.push_str(
            &serde_json::to_string(record)
                .map_err(|e| Error::Config(format!("record serialization: {e}")))?,
        );
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::storage(path, e))
}
