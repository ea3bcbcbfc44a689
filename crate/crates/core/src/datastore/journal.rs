//! Append-only annotation journal.
//!
//! One JSON record per line. A record is acknowledged only after its line is
//! written and synced, so every issued [`Receipt`] survives a crash. On open,
//! a torn final line (no trailing newline or unparsable) is cut off; a bad
//! line anywhere else is corruption and fails the open.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{validate_annotation, ParallelQaDataset, QaItem, Violation, ViolationCode};
use crate::error::{Error, Result};

pub const JOURNAL_FILE: &str = "annotations.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub seq: u64,
    pub pair_id: String,
    pub qa: QaItem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub seq: u64,
    pub pair_id: String,
    pub qa_id: String,
}

/// Base dataset plus everything in the journal. The single writer is the
/// `&mut self` on [`AnnotationStore::append`].
#[derive(Debug)]
pub struct AnnotationStore {
    journal_path: PathBuf,
    file: File,
    dataset: ParallelQaDataset,
    qa_ids: HashSet<String>,
    last_seq: u64,
    journaled: usize,
}

fn parse_journal(bytes: &[u8]) -> Result<(Vec<JournalRecord>, usize)> {
    let mut records = Vec::new();
    let mut good_len = 0;
    let mut rest = bytes;
    while !rest.is_empty() {
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            // torn tail
            break;
        };
        let line = &rest[..nl];
        let is_last = nl + 1 == rest.len();
        if !line.iter().all(u8::is_ascii_whitespace) {
            match serde_json::from_slice::<JournalRecord>(line) {
                Ok(r) => records.push(r),
                Err(_) if is_last => break,
                Err(e) => {
                    return Err(Error::Parse {
                        path: format!("journal byte {good_len}"),
                        message: e.to_string(),
                    })
                }
            }
        }
        good_len += nl + 1;
        rest = &rest[nl + 1..];
    }
    Ok((records, good_len))
}

impl AnnotationStore {
    /// Open (or create) the journal under `dir` and replay it on top of
    /// `base`.
    pub fn open(dir: &Path, base: ParallelQaDataset) -> Result<Self> {
        base.check()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let journal_path = dir.join(JOURNAL_FILE);
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| Error::io(&journal_path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(&journal_path, e))?;
        let (records, good_len) = parse_journal(&bytes)?;
        if good_len < bytes.len() {
            file.set_len(good_len as u64).map_err(|e| Error::io(&journal_path, e))?;
            file.sync_all().map_err(|e| Error::io(&journal_path, e))?;
        }

        let qa_ids = base
            .pairs
            .iter()
            .flat_map(|p| p.qas.iter().map(|q| q.id.clone()))
            .collect();
        let mut store = Self {
            journal_path,
            file,
            dataset: base,
            qa_ids,
            last_seq: 0,
            journaled: 0,
        };
        for r in records {
            store.apply(r);
        }
        Ok(store)
    }

    /// Replay is idempotent: stale sequence numbers and already-present ids
    /// are skipped.
    fn apply(&mut self, r: JournalRecord) {
        if r.seq <= self.last_seq || self.qa_ids.contains(&r.qa.id) {
            return;
        }
        let Some(pair) = self.dataset.pairs.iter_mut().find(|p| p.id == r.pair_id) else {
            return;
        };
        if !validate_annotation(pair, &r.qa).is_empty() {
            return;
        }
        self.qa_ids.insert(r.qa.id.clone());
        pair.qas.push(r.qa);
        self.last_seq = r.seq;
        self.journaled += 1;
    }

    /// Validate, write, sync, then acknowledge.
    pub fn append(&mut self, pair_id: &str, qa: QaItem) -> Result<Receipt> {
        let pair = self
            .dataset
            .pair(pair_id)
            .ok_or_else(|| Error::UnknownPair(pair_id.to_string()))?;
        let mut violations = validate_annotation(pair, &qa);
        if self.qa_ids.contains(&qa.id) {
            violations.push(Violation::new(ViolationCode::DuplicateId, "id", "duplicate id"));
        }
        if !violations.is_empty() {
            return Err(Error::Rejected(violations));
        }

        let record = JournalRecord {
            seq: self.last_seq + 1,
            pair_id: pair_id.to_string(),
            qa,
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.journal_path, e))?;

        let receipt = Receipt {
            seq: record.seq,
            pair_id: record.pair_id.clone(),
            qa_id: record.qa.id.clone(),
        };
        self.apply(record);
        Ok(receipt)
    }

    pub fn dataset(&self) -> &ParallelQaDataset {
        &self.dataset
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Number of annotations that came from the journal (not the base file).
    pub fn journaled(&self) -> usize {
        self.journaled
    }

    pub fn journal_path(&self) -> &Path {
        &self.journal_path
    }

    /// Read a journal file without opening a store.
    pub fn read_journal(path: &Path) -> Result<Vec<JournalRecord>> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(path, e)),
        };
        Ok(parse_journal(&bytes)?.0)
    }
}
