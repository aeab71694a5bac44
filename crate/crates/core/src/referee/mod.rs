//! Hidden-test-set scoring: submission intake, the append-only score
//! ledger and the leaderboard built from it.

mod board;
#[cfg(feature = "server")]
pub mod http;
mod ledger;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use board::{leaderboard, BoardRow, BoardView, Leaderboard};
pub use ledger::{Ledger, LedgerEntry};

use crate::bundle::{dir_digest, hex, Bundle};
use crate::error::{Error, Result};
use crate::io::read_matrix;
use crate::metrics::{evaluate_submission, Prediction};
use crate::task::PredKey;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEDGER_FILE: &str = "scores.jsonl";

/// `{"dataset": str, "method": str, "predictions": {"X1pred": path, ...}}`.
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub dataset: String,
    pub method: String,
    pub predictions: BTreeMap<PredKey, PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    dataset: String,
    method: String,
    predictions: BTreeMap<String, PathBuf>,
}

impl Manifest {
    /// Parses a manifest; any prediction key outside `X1pred..X9pred` is an
    /// [`Error::UnknownKey`].
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawManifest = serde_json::from_str(text)?;
        let predictions = raw
            .predictions
            .into_iter()
            .map(|(k, p)| Ok((k.parse::<PredKey>()?, p)))
            .collect::<Result<_>>()?;
        if raw.method.trim().is_empty() {
            return Err(Error::Format("manifest method is empty".into()));
        }
        Ok(Self {
            dataset: raw.dataset,
            method: raw.method,
            predictions,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(Error::io_at(path))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(Error::io_at(path))
    }

    /// Fails unless every prediction path is relative and stays inside the
    /// base directory.
    pub fn check_confined(&self) -> Result<()> {
        for (key, p) in &self.predictions {
            let escapes = p
                .components()
                .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
            if escapes {
                return Err(Error::Format(format!(
                    "{key} path {} must be relative to the inbox",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

/// A manifest with resolved paths, a timestamp and a content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub id: String,
    pub dataset: String,
    pub method: String,
    pub predictions: BTreeMap<PredKey, PathBuf>,
    pub submitted_at: String,
}

/// Current UTC time in RFC 3339 with second precision.
pub fn now_timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Submission {
    /// Resolves the manifest's paths against `base` and hashes the
    /// dataset, method and prediction file contents. Missing files are
    /// accepted here and fail their tasks at scoring time.
    pub fn from_manifest(manifest: Manifest, base: &Path, submitted_at: Option<String>) -> Result<Self> {
        let predictions: BTreeMap<PredKey, PathBuf> = manifest
            .predictions
            .into_iter()
            .map(|(k, p)| (k, base.join(p)))
            .collect();
        let mut h = Sha256::new();
        h.update(manifest.dataset.as_bytes());
        h.update([0u8]);
        h.update(manifest.method.as_bytes());
        for (key, path) in &predictions {
            h.update([0u8]);
            h.update(key.name().as_bytes());
            match fs::read(path) {
                Ok(bytes) => {
                    h.update([1u8]);
                    h.update((bytes.len() as u64).to_le_bytes());
                    h.update(&bytes);
                }
                Err(_) => h.update([2u8]),
            }
        }
        Ok(Self {
            id: hex(&h.finalize()),
            dataset: manifest.dataset,
            method: manifest.method,
            predictions,
            submitted_at: submitted_at.unwrap_or_else(now_timestamp),
        })
    }

    /// Reads every listed prediction. Unreadable or malformed files become
    /// per-key failures.
    pub fn load_predictions(&self) -> BTreeMap<PredKey, Prediction> {
        self.predictions
            .iter()
            .map(|(k, p)| (*k, read_matrix(p).map_err(|e| e.to_string())))
            .collect()
    }
}

/// Parses a manifest file into a submission. Test data is never loaded.
pub fn ingest(manifest_path: impl AsRef<Path>, submitted_at: Option<String>) -> Result<Submission> {
    let path = manifest_path.as_ref();
    let manifest = Manifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Submission::from_manifest(manifest, base, submitted_at)
}

/// A loaded hidden bundle and the fingerprint of its directory.
#[derive(Debug)]
pub struct Referee {
    dir: PathBuf,
    bundle: Bundle,
    digest: String,
}

impl Referee {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let digest = dir_digest(&dir)?;
        let bundle = Bundle::load_referee(&dir)?;
        Ok(Self { dir, bundle, digest })
    }

    pub fn bundle(&self) -> &Bundle {
        &self.bundle
    }

    pub fn dataset(&self) -> &str {
        self.bundle.name()
    }

    /// Scores a submission and appends the entry to `ledger`. The bundle
    /// directory is fingerprinted after scoring and must be unchanged.
    pub fn score_and_record(&self, sub: &Submission, ledger: &Ledger) -> Result<LedgerEntry> {
        if sub.dataset != self.dataset() {
            return Err(Error::Config(format!(
                "submission targets dataset {:?}, referee holds {:?}",
                sub.dataset,
                self.dataset()
            )));
        }
        let report = evaluate_submission(&self.bundle, sub)?;
        if dir_digest(&self.dir)? != self.digest {
            return Err(Error::BundleMutated);
        }
        let entry = LedgerEntry {
            submission_id: sub.id.clone(),
            submitted_at: sub.submitted_at.clone(),
            report,
        };
        ledger.append(&entry)?;
        Ok(entry)
    }
}

/// One-shot form of [`Referee::score_and_record`].
pub fn score_and_record(sub: &Submission, bundle_dir: impl AsRef<Path>, ledger: &Ledger) -> Result<LedgerEntry> {
    Referee::open(bundle_dir)?.score_and_record(sub, ledger)
}
