use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{task_error, to_score, SCORE_MIN};
use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::json::{serialize_f64, Sig17};
use crate::matrix::TimeSeriesMatrix;
use crate::referee::Submission;
use crate::task::{PredKey, ScoreId};

/// A loaded prediction, or the reason it could not be loaded.
pub type Prediction = std::result::Result<TimeSeriesMatrix, String>;

/// One value per score, serialized as an `E1..E12` ordered JSON object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreMap<T>(pub [T; 12]);

impl<T: Copy> ScoreMap<T> {
    pub fn get(&self, id: ScoreId) -> T {
        self.0[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ScoreId, T)> + '_ {
        ScoreId::ALL.into_iter().map(|id| (id, self.0[id.index()]))
    }
}

impl Serialize for ScoreMap<f64> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(12))?;
        for (id, v) in self.iter() {
            map.serialize_entry(id.name(), &Sig17(v))?;
        }
        map.end()
    }
}

impl Serialize for ScoreMap<Option<f64>> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(12))?;
        for (id, v) in self.iter() {
            map.serialize_entry(id.name(), &v.map(Sig17))?;
        }
        map.end()
    }
}

struct ScoreMapVisitor<T>(std::marker::PhantomData<T>);

impl<'de, T: Deserialize<'de> + Copy + Default> Visitor<'de> for ScoreMapVisitor<T> {
    type Value = ScoreMap<T>;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an object keyed E1..E12")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Self::Value, A::Error> {
        let mut out = [T::default(); 12];
        let mut seen = [false; 12];
        while let Some((key, value)) = access.next_entry::<String, T>()? {
            let id: ScoreId = key.parse().map_err(serde::de::Error::custom)?;
            out[id.index()] = value;
            seen[id.index()] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(serde::de::Error::custom(format!("missing {}", ScoreId::ALL[i])));
        }
        Ok(ScoreMap(out))
    }
}

impl<'de, T: Deserialize<'de> + Copy + Default> Deserialize<'de> for ScoreMap<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_map(ScoreMapVisitor(std::marker::PhantomData))
    }
}

/// Twelve clipped scores, the raw errors behind them and the composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub dataset: String,
    pub method: String,
    pub raw: ScoreMap<Option<f64>>,
    pub scores: ScoreMap<f64>,
    #[serde(serialize_with = "serialize_f64")]
    pub composite: f64,
    /// Reason string for every task scored at the floor because it failed.
    #[serde(default)]
    pub failures: BTreeMap<ScoreId, String>,
}

impl ScoreReport {
    pub fn from_raw(
        dataset: &str,
        method: &str,
        raw: [Option<f64>; 12],
        failures: BTreeMap<ScoreId, String>,
    ) -> Self {
        let scores = raw.map(|r| r.map_or(SCORE_MIN, to_score));
        let composite = scores.iter().sum::<f64>() / 12.0;
        Self {
            dataset: dataset.to_string(),
            method: method.to_string(),
            raw: ScoreMap(raw),
            scores: ScoreMap(scores),
            composite,
            failures,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Scores in-memory predictions against a referee bundle. Every per-task
/// problem (missing file, wrong shape, degenerate truth, non-finite error)
/// floors that task at -100 and is recorded in `failures`.
pub fn evaluate_predictions(
    bundle: &Bundle,
    method: &str,
    predictions: &BTreeMap<PredKey, Prediction>,
) -> Result<ScoreReport> {
    if !bundle.is_referee() {
        return Err(Error::RefereeBundleRequired(bundle.name().into()));
    }
    let cfg = bundle.config();
    let outcomes: Vec<std::result::Result<f64, String>> = ScoreId::ALL
        .par_iter()
        .map(|&id| {
            let task = cfg.task(id).map_err(|e| e.to_string())?;
            let pred = match predictions.get(&task.pred_key) {
                None => return Err(format!("missing {}", task.pred_key)),
                Some(Err(reason)) => return Err(reason.clone()),
                Some(Ok(p)) => p,
            };
            if pred.shape() != task.pred_shape {
                return Err(format!(
                    "{} has shape {:?}, expected {:?}",
                    task.pred_key,
                    pred.shape(),
                    task.pred_shape
                ));
            }
            let truth = bundle.test(&task.truth_key).map_err(|e| e.to_string())?;
            let s = task_error(&task, cfg, pred, truth).map_err(|e| e.to_string())?;
            if s.is_finite() {
                Ok(s)
            } else {
                Err(format!("non-finite error {s}"))
            }
        })
        .collect();
    let mut raw = [None; 12];
    let mut failures = BTreeMap::new();
    for (id, outcome) in ScoreId::ALL.into_iter().zip(outcomes) {
        match outcome {
            Ok(s) => raw[id.index()] = Some(s),
            Err(reason) => {
                failures.insert(id, reason);
            }
        }
    }
    Ok(ScoreReport::from_raw(bundle.name(), method, raw, failures))
}

/// Loads the submission's prediction files and scores them.
pub fn evaluate_submission(bundle: &Bundle, submission: &Submission) -> Result<ScoreReport> {
    let predictions = submission.load_predictions();
    evaluate_predictions(bundle, &submission.method, &predictions)
}
