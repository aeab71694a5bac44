//! Scoring engine: short-term relative error, spectral long-term error,
//! the clipped score transform and full-submission evaluation.

mod report;
mod spectrum;

pub use report::{evaluate_predictions, evaluate_submission, Prediction, ScoreMap, ScoreReport};
pub use spectrum::{power_spectrum, SpectralMatrix, POWER_FLOOR};

use crate::error::{Error, Result};
use crate::matrix::TimeSeriesMatrix;
use crate::splits::DatasetConfig;
use crate::task::{MetricKind, TaskKind, TaskSpec};

pub const SCORE_MIN: f64 = -100.0;
pub const SCORE_MAX: f64 = 100.0;

fn check_shapes(pred: &TimeSeriesMatrix, truth: &TimeSeriesMatrix) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} does not match truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    Ok(())
}

/// `||truth[..k] - pred[..k]||_F / ||truth[..k]||_F` over the first `k` rows.
pub fn short_term_error(pred: &TimeSeriesMatrix, truth: &TimeSeriesMatrix, k: usize) -> Result<f64> {
    check_shapes(pred, truth)?;
    if k == 0 || k > truth.rows() {
        return Err(Error::Shape(format!("k = {k} outside 1..={}", truth.rows())));
    }
    let len = k * truth.cols();
    let t = &truth.values()[..len];
    let p = &pred.values()[..len];
    let denom = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(Error::Degenerate("truth window has zero norm".into()));
    }
    let num = t
        .iter()
        .zip(p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// `||P(truth) - P(pred)||_F / ||P(truth)||_F` with `P` the log power
/// spectrum of the last `k` rows.
pub fn long_term_error(
    pred: &TimeSeriesMatrix,
    truth: &TimeSeriesMatrix,
    k: usize,
    kmax: usize,
) -> Result<f64> {
    check_shapes(pred, truth)?;
    let pt = power_spectrum(truth, k, kmax)?;
    let pp = power_spectrum(pred, k, kmax)?;
    let denom = pt.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::Degenerate("truth spectrum has zero norm".into()));
    }
    let num = pt
        .values()
        .iter()
        .zip(pp.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// `clip(100 (1 - s), -100, 100)`; a non-finite `s` is a failed task.
pub fn to_score(s: f64) -> f64 {
    if !s.is_finite() {
        return SCORE_MIN;
    }
    (100.0 * (1.0 - s)).clamp(SCORE_MIN, SCORE_MAX)
}

/// Raw error of one task with the dataset's split parameters.
/// Reconstruction tasks compare the whole window.
pub fn task_error(
    task: &TaskSpec,
    cfg: &DatasetConfig,
    pred: &TimeSeriesMatrix,
    truth: &TimeSeriesMatrix,
) -> Result<f64> {
    match (task.metric_kind, task.task_kind) {
        (MetricKind::ShortTerm, TaskKind::Reconstruction) => {
            short_term_error(pred, truth, truth.rows())
        }
        (MetricKind::ShortTerm, _) => short_term_error(pred, truth, cfg.k_split.min(truth.rows())),
        (MetricKind::LongTerm, _) => {
            long_term_error(pred, truth, cfg.k_split.min(truth.rows()), cfg.kmax)
        }
    }
}
