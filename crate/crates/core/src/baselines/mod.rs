//! Reference predictors and the runner that turns one of them into a full
//! twelve-task submission.

pub mod dmd;
pub mod esn;
mod linalg;
pub mod naive;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dmd::{dmd_fit, dmd_fit_multi, DmdConfig, DmdModel};
pub use esn::{esn_fit, esn_fit_with, ridge_readout, spectral_radius, EsnConfig, EsnModel, ReservoirSet};
pub use naive::{predict_average, predict_zeros};

use crate::bundle::TrainView;
use crate::error::{Error, Result};
use crate::io::write_matrix;
use crate::matrix::TimeSeriesMatrix;
use crate::metrics::Prediction;
use crate::referee::Manifest;
use crate::task::{PredKey, TaskKind};

/// A baseline and its hyperparameters, as read from a YAML config:
///
/// ```yaml
/// method: dmd
/// rank: 8
/// delay: 2
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodConfig {
    Zeros,
    Average,
    Dmd(DmdConfig),
    Esn(EsnConfig),
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Zeros => "zeros",
            MethodConfig::Average => "average",
            MethodConfig::Dmd(_) => "dmd",
            MethodConfig::Esn(_) => "esn",
        }
    }

    /// Default configuration of a method by name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "zeros" => Ok(MethodConfig::Zeros),
            "average" => Ok(MethodConfig::Average),
            "dmd" => Ok(MethodConfig::Dmd(DmdConfig::default())),
            "hodmd" => Ok(MethodConfig::Dmd(DmdConfig { rank: 10, delay: 5 })),
            "esn" => Ok(MethodConfig::Esn(EsnConfig::default())),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }

    pub fn from_yaml(text: &str) -> Result<Self> {
        Ok(serde_yaml::from_str(text)?)
    }
}

/// What a prediction should cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// The given number of rows after the last input row.
    Forecast(usize),
    /// The rows of the (last) training trajectory.
    Reconstruct,
}

/// Reservoirs reused across fits with the same random structure.
#[derive(Debug, Default)]
pub struct ReservoirCache {
    sets: Mutex<Vec<Arc<ReservoirSet>>>,
}

impl ReservoirCache {
    pub fn get(&self, cfg: &EsnConfig, channels: usize) -> Result<Arc<ReservoirSet>> {
        let mut sets = self.sets.lock().expect("reservoir cache poisoned");
        if let Some(s) = sets.iter().find(|s| s.matches(cfg, channels)) {
            return Ok(s.clone());
        }
        let set = Arc::new(ReservoirSet::new(cfg, channels)?);
        sets.push(set.clone());
        Ok(set)
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Zeros { channels: usize, rows: usize },
    Average { means: Vec<f64>, rows: usize },
    Dmd(DmdModel),
    Esn(EsnModel),
}

/// Lowers the spin-up so that every trajectory keeps training pairs.
fn clamp_spinup(cfg: &EsnConfig, train: &[&TimeSeriesMatrix]) -> EsnConfig {
    let shortest = train.iter().map(|t| t.rows()).min().unwrap_or(0);
    if shortest > cfg.spinup + 1 {
        return *cfg;
    }
    let spinup = shortest.saturating_sub(2) / 2;
    log::warn!(
        "N_spin = {} leaves no training pairs in {shortest} rows; using {spinup}",
        cfg.spinup
    );
    EsnConfig { spinup, ..*cfg }
}

pub fn fit(
    method: &MethodConfig,
    train: &[&TimeSeriesMatrix],
    cache: &ReservoirCache,
) -> Result<FittedModel> {
    let last = *train
        .last()
        .ok_or_else(|| Error::Shape("no training trajectories".into()))?;
    Ok(match method {
        MethodConfig::Zeros => FittedModel::Zeros {
            channels: last.cols(),
            rows: last.rows(),
        },
        MethodConfig::Average => {
            let stacked = TimeSeriesMatrix::vstack(train)?;
            FittedModel::Average {
                means: stacked.column_means(),
                rows: last.rows(),
            }
        }
        MethodConfig::Dmd(cfg) => FittedModel::Dmd(dmd_fit_multi(train, cfg)?),
        MethodConfig::Esn(cfg) => {
            let cfg = clamp_spinup(cfg, train);
            let set = cache.get(&cfg, last.cols())?;
            FittedModel::Esn(esn_fit_with(set, train, &cfg)?)
        }
    })
}

impl FittedModel {
    pub fn forecast(&self, steps: usize) -> TimeSeriesMatrix {
        match self {
            FittedModel::Zeros { channels, .. } => predict_zeros((steps, *channels)),
            FittedModel::Average { means, .. } => naive::repeat_row(means, steps),
            FittedModel::Dmd(m) => m.forecast(steps),
            FittedModel::Esn(m) => m.forecast(steps),
        }
    }

    pub fn reconstruct(&self) -> TimeSeriesMatrix {
        match self {
            FittedModel::Zeros { channels, rows } => predict_zeros((*rows, *channels)),
            FittedModel::Average { means, rows } => naive::repeat_row(means, *rows),
            FittedModel::Dmd(m) => m.reconstruct(),
            FittedModel::Esn(m) => m.reconstruct(),
        }
    }

    /// Re-anchors the model on a burn-in window so forecasts continue from
    /// its end.
    pub fn warm_started(&self, burnin: &TimeSeriesMatrix) -> Result<FittedModel> {
        Ok(match self {
            FittedModel::Zeros { channels, .. } => FittedModel::Zeros {
                channels: *channels,
                rows: burnin.rows(),
            },
            FittedModel::Average { means, .. } => FittedModel::Average {
                means: means.clone(),
                rows: burnin.rows(),
            },
            FittedModel::Dmd(m) => FittedModel::Dmd(m.warm_started(burnin)?),
            FittedModel::Esn(m) => FittedModel::Esn(m.warm_started(burnin)?),
        })
    }

    pub fn predict(&self, target: Target) -> TimeSeriesMatrix {
        match target {
            Target::Forecast(steps) => self.forecast(steps),
            Target::Reconstruct => self.reconstruct(),
        }
    }
}

/// Fit, optional warm start, then forecast or reconstruct.
pub fn predict(
    method: &MethodConfig,
    train: &[&TimeSeriesMatrix],
    burnin: Option<&TimeSeriesMatrix>,
    target: Target,
    cache: &ReservoirCache,
) -> Result<TimeSeriesMatrix> {
    let model = fit(method, train, cache)?;
    let model = match burnin {
        Some(b) => model.warm_started(b)?,
        None => model,
    };
    let out = model.predict(target);
    if let Some(i) = out.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(out)
}

/// Predictions for all nine prediction files. Models fitted on the same
/// training matrices are shared; a failure only affects its own files.
pub fn run_all(
    method: &MethodConfig,
    view: &TrainView<'_>,
    cache: &ReservoirCache,
) -> BTreeMap<PredKey, Prediction> {
    let cfg = view.config();
    // Training keys -> [(pred key, target, burn-in key)].
    let mut plan: BTreeMap<Vec<String>, Vec<(PredKey, Target, Option<String>)>> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for key in PredKey::ALL {
        let task = match cfg.task(key.primary_score()) {
            Ok(t) => t,
            Err(e) => {
                out.insert(key, Err(e.to_string()));
                continue;
            }
        };
        let target = match task.task_kind {
            TaskKind::Reconstruction => Target::Reconstruct,
            _ => Target::Forecast(task.pred_shape.0),
        };
        plan.entry(task.train_keys.clone())
            .or_default()
            .push((key, target, task.burnin_key.clone()));
    }

    let results: Vec<(PredKey, Prediction)> = plan
        .into_par_iter()
        .flat_map_iter(|(train_keys, jobs)| {
            let fitted = train_keys
                .iter()
                .map(|k| view.get(k))
                .collect::<Result<Vec<_>>>()
                .and_then(|train| fit(method, &train, cache));
            jobs.into_iter().map(move |(key, target, burnin)| {
                let pred = match &fitted {
                    Err(e) => Err(e.to_string()),
                    Ok(model) => predict_one(model, target, burnin.as_deref(), view),
                };
                if let Err(reason) = &pred {
                    log::warn!("{key}: {reason}");
                }
                (key, pred)
            })
        })
        .collect();
    out.extend(results);
    out
}

fn predict_one(
    model: &FittedModel,
    target: Target,
    burnin: Option<&str>,
    view: &TrainView<'_>,
) -> Prediction {
    let pred = match burnin {
        Some(k) => view
            .get(k)
            .and_then(|b| model.warm_started(b))
            .map(|m| m.predict(target)),
        None => Ok(model.predict(target)),
    }
    .map_err(|e| e.to_string())?;
    match pred.values().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i).to_string()),
        None => Ok(pred),
    }
}

/// Writes `X{i}pred.ctfw` files and a `manifest.json` listing them into
/// `dir`. Failed predictions are left out of the manifest.
pub fn write_submission(
    dir: impl AsRef<Path>,
    dataset: &str,
    method: &str,
    predictions: &BTreeMap<PredKey, Prediction>,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(Error::io_at(dir))?;
    let mut files = BTreeMap::new();
    for (key, pred) in predictions {
        if let Ok(m) = pred {
            let name = format!("{}.{}", key.name(), crate::bundle::EXTENSION);
            write_matrix(m, dir.join(&name))?;
            files.insert(*key, name.into());
        }
    }
    let manifest = Manifest {
        dataset: dataset.to_string(),
        method: method.to_string(),
        predictions: files,
    };
    manifest.save(dir.join(crate::referee::MANIFEST_FILE))?;
    Ok(manifest)
}
