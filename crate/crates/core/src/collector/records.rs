//! Line-oriented record files.
//!
//! ```text
//! # dataset_id=wine episodes=128 operator_set=3f0c.. seed=7 steps=10
//! 0.8731...\t<SOS> f0 <SEP> f1 <SEP> f0 f1 + <EOS>
//! ```
//!
//! The header is a single `#` line of sorted `key=value` pairs. Utilities
//! are written in shortest round-trip form so a reloaded file is exact. The
//! episode and step of a record follow from its line position and `steps`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::expr::{CrossSequence, ExprError};

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationRecord {
    pub sequence: CrossSequence,
    pub utility: f64,
    pub episode: usize,
    pub step: usize,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record file has no header line")]
    MissingHeader,
    #[error("header field `{0}` is missing or malformed")]
    BadHeader(String),
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("line {line}: {source}")]
    BadSequence { line: usize, source: ExprError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordFile {
    pub header: BTreeMap<String, String>,
    pub records: Vec<ExplorationRecord>,
}

impl RecordFile {
    pub fn header_value(&self, key: &str) -> Result<&str, RecordError> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| RecordError::BadHeader(key.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("#");
        for (k, v) in &self.header {
            debug_assert!(!k.contains([' ', '=']) && !v.contains([' ', '\n']));
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{:?}\t{}", r.utility, r.sequence);
        }
        out
    }

    pub fn parse(text: &str) -> Result<RecordFile, RecordError> {
        let mut lines = text.lines();
        let head = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or(RecordError::MissingHeader)?;
        let mut header = BTreeMap::new();
        for kv in head.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| RecordError::BadHeader(kv.to_string()))?;
            header.insert(k.to_string(), v.to_string());
        }
        let steps: usize = header
            .get("steps")
            .and_then(|s| s.parse().ok())
            .filter(|&s| s > 0)
            .ok_or_else(|| RecordError::BadHeader("steps".into()))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let (u, seq) = line.split_once('\t').ok_or_else(|| RecordError::BadLine {
                line: lineno,
                reason: "expected `<utility>\\t<sequence>`".into(),
            })?;
            let utility: f64 = u.parse().map_err(|_| RecordError::BadLine {
                line: lineno,
                reason: format!("bad utility `{u}`"),
            })?;
            let sequence =
                CrossSequence::parse_text(seq).map_err(|source| RecordError::BadSequence { line: lineno, source })?;
            let idx = records.len();
            records.push(ExplorationRecord {
                sequence,
                utility,
                episode: idx / steps,
                step: idx % steps,
            });
        }
        Ok(RecordFile { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<(), RecordError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RecordFile, RecordError> {
        RecordFile::parse(&std::fs::read_to_string(path)?)
    }
}
