//! Random search with synchronous successive halving.
//!
//! Every trial samples a configuration and is trained at the lowest rung on
//! a trailing fraction of the tuning-train rows. The best `keep_fraction`
//! of each rung moves up to a larger fraction, and the last rung uses all
//! rows. Scores are the task's own metric on the validation part of the
//! tuning split, so test matrices are never involved.

mod space;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use space::{Distribution, HyperParamSpace, ParamSpec, Sample};

use crate::baselines::{predict, MethodConfig, ReservoirCache, Target};
use crate::bundle::TrainView;
use crate::error::{Error, Result};
use crate::json::{serialize_f64, serialize_opt_f64};
use crate::matrix::TimeSeriesMatrix;
use crate::metrics::{task_error, to_score};
use crate::splits::{make_tuning_split, TuningSplit};
use crate::task::TaskSpec;

pub const TRIALS_FILE: &str = "trials.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_trials: usize,
    pub max_seconds: f64,
    pub rungs: usize,
    pub keep_fraction: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_trials: 32,
            max_seconds: 600.0,
            rungs: 3,
            keep_fraction: 0.5,
        }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if self.max_trials == 0 || self.rungs == 0 {
            return Err(Error::Config("max_trials and rungs must be positive".into()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config("keep_fraction must lie in (0, 1]".into()));
        }
        if !(self.max_seconds > 0.0) {
            return Err(Error::Config("max_seconds must be positive".into()));
        }
        Ok(())
    }

    /// Share of the training rows used at rung `r`.
    pub fn fraction(&self, rung: usize) -> f64 {
        self.keep_fraction.powi((self.rungs - 1 - rung) as i32)
    }

    /// Trials promoted out of a rung of `n`.
    pub fn promoted(&self, n: usize) -> usize {
        ((n as f64 * self.keep_fraction).floor() as usize).clamp(1, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub method: String,
    pub config: Sample,
    /// Name of the score used for validation, e.g. `E1`.
    pub metric: String,
    /// Score at the highest rung reached; `None` if that training failed.
    #[serde(serialize_with = "serialize_opt_f64")]
    pub score: Option<f64>,
    pub rung: usize,
    #[serde(serialize_with = "serialize_f64")]
    pub budget_fraction: f64,
    pub rung_scores: Vec<Option<f64>>,
    pub error: Option<String>,
    #[serde(serialize_with = "serialize_f64")]
    pub wall_seconds: f64,
}

impl TrialRecord {
    fn rank_key(&self) -> f64 {
        self.score.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best: TrialRecord,
    pub best_config: MethodConfig,
    pub records: Vec<TrialRecord>,
    /// Number of (trial, rung) trainings executed.
    pub trainings: usize,
}

pub struct TuneOptions<'a> {
    pub seed: u64,
    pub workers: usize,
    /// Append records to this JSON-lines file.
    pub log: Option<&'a Path>,
}

impl Default for TuneOptions<'_> {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            log: None,
        }
    }
}

/// Keeps the trailing share of each trajectory. ESN budgets count rows
/// after the spin-up.
fn budget_rows(method: &MethodConfig, m: &TimeSeriesMatrix, fraction: f64) -> Result<TimeSeriesMatrix> {
    let rows = m.rows();
    let keep = match method {
        MethodConfig::Esn(c) if c.spinup < rows => {
            c.spinup + ((rows - c.spinup) as f64 * fraction).ceil() as usize
        }
        _ => (rows as f64 * fraction).ceil() as usize,
    };
    m.tail_rows(keep.clamp(2.min(rows), rows))
}

fn evaluate(
    method: &MethodConfig,
    task: &TaskSpec,
    view: &TrainView<'_>,
    split: &TuningSplit,
    fraction: f64,
    cache: &ReservoirCache,
) -> Result<f64> {
    let train = split
        .train
        .iter()
        .map(|m| budget_rows(method, m, fraction))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&TimeSeriesMatrix> = train.iter().collect();
    let target = Target::Forecast(split.validation.rows());
    let pred = predict(method, &refs, split.burnin.as_ref(), target, cache)?;
    let s = task_error(task, view.config(), &pred, &split.validation)?;
    Ok(to_score(s))
}

/// Tunes `space` for `task` on the training matrices behind `view`.
pub fn tune(
    space: &HyperParamSpace,
    task: &TaskSpec,
    view: &TrainView<'_>,
    budget: &Budget,
    opts: &TuneOptions<'_>,
) -> Result<TuneResult> {
    space.validate()?;
    budget.validate()?;
    let split = make_tuning_split(task, view)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let start = Instant::now();
    let cache = ReservoirCache::default();
    let metric = task.score_id.name().to_string();

    let mut records: Vec<TrialRecord> = (0..budget.max_trials)
        .map(|id| {
            let config = space.sample(opts.seed, id as u64);
            TrialRecord {
                trial_id: id,
                method: space.method.clone(),
                config,
                metric: metric.clone(),
                score: None,
                rung: 0,
                budget_fraction: 0.0,
                rung_scores: Vec::new(),
                error: Some("not started: time budget exhausted".into()),
                wall_seconds: 0.0,
            }
        })
        .collect();
    let mut active: Vec<usize> = (0..budget.max_trials).collect();
    let mut trainings = 0;
    let mut started = vec![false; budget.max_trials];

    for rung in 0..budget.rungs {
        let fraction = budget.fraction(rung);
        let outcomes: Vec<(usize, Option<(Result<f64>, f64)>)> = pool.install(|| {
            active
                .par_iter()
                .map(|&id| {
                    if start.elapsed().as_secs_f64() > budget.max_seconds {
                        return (id, None);
                    }
                    let t0 = Instant::now();
                    let outcome = space
                        .config(&records[id].config)
                        .and_then(|m| evaluate(&m, task, view, &split, fraction, &cache));
                    (id, Some((outcome, t0.elapsed().as_secs_f64())))
                })
                .collect()
        });
        let mut ran = Vec::new();
        for (id, outcome) in outcomes {
            let Some((outcome, secs)) = outcome else { continue };
            trainings += 1;
            started[id] = true;
            let r = &mut records[id];
            r.rung = rung;
            r.budget_fraction = fraction;
            r.wall_seconds += secs;
            match outcome {
                Ok(score) => {
                    r.score = Some(score);
                    r.error = None;
                }
                Err(e) => {
                    r.score = None;
                    r.error = Some(e.to_string());
                }
            }
            r.rung_scores.push(r.score);
            ran.push(id);
        }
        if rung + 1 == budget.rungs || ran.is_empty() {
            break;
        }
        ran.sort_by(|&a, &b| {
            records[b]
                .rank_key()
                .total_cmp(&records[a].rank_key())
                .then(a.cmp(&b))
        });
        ran.truncate(budget.promoted(ran.len()));
        ran.sort_unstable();
        active = ran;
    }

    records.retain(|r| started[r.trial_id]);
    if let Some(path) = opts.log {
        append_records(path, &records)?;
    }
    let best = records
        .iter()
        .filter(|r| r.score.is_some())
        .max_by(|a, b| a.rank_key().total_cmp(&b.rank_key()).then(b.trial_id.cmp(&a.trial_id)))
        .cloned();
    let Some(best) = best else {
        let log = records
            .iter()
            .map(|r| format!("trial {}: {}", r.trial_id, r.error.as_deref().unwrap_or("?")))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Error::AllTrialsFailed(log));
    };
    let best_config = space.config(&best.config)?;
    Ok(TuneResult {
        best,
        best_config,
        records,
        trainings,
    })
}

fn append_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(Error::io_at(path))?;
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(Error::io_at(path))?;
    Ok(())
}
