//! On-disk and in-memory bundle of task matrices.
//!
//! A referee bundle holds every `X*train` and `X*test` matrix plus the
//! hidden parametric values; a participant bundle holds only the training
//! matrices and `dataset.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{read_matrix, write_matrix};
use crate::matrix::TimeSeriesMatrix;
use crate::splits::{DatasetConfig, TEST_KEYS, TRAIN_KEYS};
use crate::task::{ScoreId, TaskSpec};

pub const CONFIG_FILE: &str = "dataset.json";
pub const HIDDEN_FILE: &str = "hidden.json";
pub const EXTENSION: &str = "ctfw";

/// Parameter values of the five parametric trajectories. Referee only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenParams {
    pub params: Vec<f64>,
}

#[derive(Debug)]
pub struct Bundle {
    config: DatasetConfig,
    train: BTreeMap<String, TimeSeriesMatrix>,
    test: Option<BTreeMap<String, TimeSeriesMatrix>>,
    hidden: Option<HiddenParams>,
    test_reads: AtomicUsize,
}

impl Bundle {
    pub fn from_parts(
        config: DatasetConfig,
        train: BTreeMap<String, TimeSeriesMatrix>,
        test: Option<BTreeMap<String, TimeSeriesMatrix>>,
        hidden: Option<HiddenParams>,
    ) -> Self {
        Self {
            config,
            train,
            test,
            hidden,
            test_reads: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn hidden(&self) -> Option<&HiddenParams> {
        self.hidden.as_ref()
    }

    pub fn train(&self, key: &str) -> Result<&TimeSeriesMatrix> {
        self.train
            .get(key)
            .ok_or_else(|| Error::MissingMatrix(key.to_string()))
    }

    /// Ground-truth access. Every call is counted so that tests can prove
    /// that tuning and baselines never look at the truths.
    pub fn test(&self, key: &str) -> Result<&TimeSeriesMatrix> {
        self.test_reads.fetch_add(1, Ordering::Relaxed);
        self.test
            .as_ref()
            .ok_or_else(|| Error::MissingMatrix(format!("{key} (participant bundle)")))?
            .get(key)
            .ok_or_else(|| Error::MissingMatrix(key.to_string()))
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::Relaxed)
    }

    pub fn is_referee(&self) -> bool {
        self.test
            .as_ref()
            .is_some_and(|t| TEST_KEYS.iter().all(|k| t.contains_key(*k)))
    }

    /// Handle exposing only the training matrices.
    pub fn train_view(&self) -> TrainView<'_> {
        TrainView {
            config: &self.config,
            train: &self.train,
        }
    }

    pub fn tasks(&self) -> Result<Vec<TaskSpec>> {
        self.config.tasks()
    }

    pub fn task(&self, id: ScoreId) -> Result<TaskSpec> {
        self.config.task(id)
    }

    /// Participant-facing copy: training matrices and config only.
    pub fn to_participant(&self) -> Bundle {
        Bundle::from_parts(self.config.clone(), self.train.clone(), None, None)
    }

    /// Writes `X*.ctfw`, `dataset.json` and, for referee bundles,
    /// `hidden.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(Error::io_at(dir))?;
        let config = serde_json::to_string_pretty(&self.config)?;
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, config + "\n").map_err(Error::io_at(&path))?;
        for (key, m) in &self.train {
            write_matrix(m, dir.join(format!("{key}.{EXTENSION}")))?;
        }
        if let Some(test) = &self.test {
            for (key, m) in test {
                write_matrix(m, dir.join(format!("{key}.{EXTENSION}")))?;
            }
        }
        if let Some(hidden) = &self.hidden {
            let path = dir.join(HIDDEN_FILE);
            fs::write(&path, serde_json::to_string_pretty(hidden)? + "\n")
                .map_err(Error::io_at(&path))?;
        }
        Ok(())
    }

    pub fn save_participant(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.to_participant().save(dir)
    }

    /// Loads only the config and the training matrices; test files are
    /// never opened.
    pub fn load_train_only(dir: impl AsRef<Path>) -> Result<Bundle> {
        let dir = dir.as_ref();
        let config = load_config(dir)?;
        let mut train = BTreeMap::new();
        for key in TRAIN_KEYS {
            let path = dir.join(format!("{key}.{EXTENSION}"));
            train.insert(key.to_string(), read_matrix(&path)?);
        }
        Ok(Bundle::from_parts(config, train, None, None))
    }

    /// Loads a referee bundle. Fails with [`Error::RefereeBundleRequired`]
    /// when no test matrix is present.
    pub fn load_referee(dir: impl AsRef<Path>) -> Result<Bundle> {
        let dir = dir.as_ref();
        let mut bundle = Self::load_train_only(dir)?;
        let present: Vec<&str> = TEST_KEYS
            .iter()
            .copied()
            .filter(|k| dir.join(format!("{k}.{EXTENSION}")).exists())
            .collect();
        if present.is_empty() {
            return Err(Error::RefereeBundleRequired(dir.to_path_buf()));
        }
        let mut test = BTreeMap::new();
        for key in TEST_KEYS {
            let m = read_matrix(dir.join(format!("{key}.{EXTENSION}")))?;
            test.insert(key.to_string(), m);
        }
        bundle.test = Some(test);
        let hidden_path = dir.join(HIDDEN_FILE);
        if hidden_path.exists() {
            let text = fs::read_to_string(&hidden_path).map_err(Error::io_at(&hidden_path))?;
            bundle.hidden = Some(serde_json::from_str(&text)?);
        }
        Ok(bundle)
    }
}

/// Training-only view handed to baselines and the tuner.
#[derive(Debug, Clone, Copy)]
pub struct TrainView<'a> {
    config: &'a DatasetConfig,
    train: &'a BTreeMap<String, TimeSeriesMatrix>,
}

impl<'a> TrainView<'a> {
    pub fn config(&self) -> &'a DatasetConfig {
        self.config
    }

    pub fn get(&self, key: &str) -> Result<&'a TimeSeriesMatrix> {
        self.train
            .get(key)
            .ok_or_else(|| Error::MissingMatrix(key.to_string()))
    }
}

pub fn load_config(dir: &Path) -> Result<DatasetConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(Error::io_at(&path))?;
    let cfg: DatasetConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Fails if a participant-facing directory contains any ground truth or
/// hidden parameter file.
pub fn check_participant_dir(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for entry in fs::read_dir(dir).map_err(Error::io_at(dir))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        let is_test = name.starts_with('X') && name.contains("test");
        if is_test || name == HIDDEN_FILE {
            return Err(Error::Config(format!(
                "participant directory {} contains {name}",
                dir.display()
            )));
        }
    }
    Ok(())
}

/// SHA-256 over the sorted file names and contents of a directory.
pub fn dir_digest(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(Error::io_at(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.file_name())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for name in names {
        let path = dir.join(&name);
        h.update(name.to_string_lossy().as_bytes());
        h.update([0u8]);
        h.update(fs::read(&path).map_err(Error::io_at(&path))?);
    }
    Ok(hex(&h.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
