use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ScoreReport;

/// One scored submission. Per-task failure notes live in
/// `report.failures`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub submission_id: String,
    pub submitted_at: String,
    pub report: ScoreReport,
}

impl LedgerEntry {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("entry serializes")
    }
}

/// Append-only JSON-lines file of [`LedgerEntry`] values.
#[derive(Debug, Clone)]
pub struct Ledger {
    path: PathBuf,
}

impl Ledger {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one line under an exclusive lock and syncs it to disk.
    pub fn append(&self, entry: &LedgerEntry) -> Result<()> {
        let path = &self.path;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(Error::io_at(parent))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(Error::io_at(path))?;
        file.lock().map_err(Error::io_at(path))?;
        let line = entry.to_json() + "\n";
        let written = file
            .write_all(line.as_bytes())
            .and_then(|_| file.sync_data());
        let unlocked = file.unlock();
        written.map_err(Error::io_at(path))?;
        unlocked.map_err(Error::io_at(path))?;
        Ok(())
    }

    /// Every complete line, in append order. A missing file is an empty
    /// ledger; a trailing line without its newline is still being written
    /// and is skipped.
    pub fn read(&self) -> Result<Vec<LedgerEntry>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::IoPath { path: self.path.clone(), source: e }),
        };
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        complete
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::Format(format!("ledger line {}: {e}", i + 1)))
            })
            .collect()
    }

    pub fn find(&self, submission_id: &str) -> Result<Option<LedgerEntry>> {
        Ok(self
            .read()?
            .into_iter()
            .rev()
            .find(|e| e.submission_id == submission_id))
    }
}
