//! Append-only journal of user verdicts on model outputs.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Endorse,
    Reject,
    Unsure,
}

/// A test-set index, or the literal `"drawn"` for a user-drawn digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleRef {
    Index(usize),
    Drawn(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRecord {
    pub model_id: String,
    pub sample_id: SampleRef,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
    /// Filled in on receipt when absent.
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug)]
pub struct FeedbackJournal {
    path: PathBuf,
    writer: Mutex<()>,
}

impl FeedbackJournal {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FeedbackJournal { path: path.into(), writer: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &FeedbackRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        file.write_all(line.as_bytes())?;
        file.sync_data()
    }

    /// Every stored record; a missing journal reads as empty.
    pub fn records(&self) -> std::io::Result<Vec<FeedbackRecord>> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line)?);
        }
        Ok(out)
    }
}
