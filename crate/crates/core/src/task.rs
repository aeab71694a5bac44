//! Score identifiers and the file wiring of the twelve tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
    E9,
    E10,
    E11,
    E12,
}

impl ScoreId {
    pub const ALL: [ScoreId; 12] = [
        ScoreId::E1,
        ScoreId::E2,
        ScoreId::E3,
        ScoreId::E4,
        ScoreId::E5,
        ScoreId::E6,
        ScoreId::E7,
        ScoreId::E8,
        ScoreId::E9,
        ScoreId::E10,
        ScoreId::E11,
        ScoreId::E12,
    ];

    /// Zero-based position, `E1 -> 0`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        const NAMES: [&str; 12] = [
            "E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8", "E9", "E10", "E11", "E12",
        ];
        NAMES[self.index()]
    }

    pub fn task_kind(self) -> TaskKind {
        use ScoreId::*;
        match self {
            E3 | E5 => TaskKind::Reconstruction,
            E11 | E12 => TaskKind::Parametric,
            _ => TaskKind::Forecast,
        }
    }

    pub fn metric_kind(self) -> MetricKind {
        use ScoreId::*;
        match self {
            E2 | E4 | E6 | E8 | E10 => MetricKind::LongTerm,
            _ => MetricKind::ShortTerm,
        }
    }

    /// Prediction file feeding this score.
    pub fn pred_key(self) -> PredKey {
        use ScoreId::*;
        PredKey(match self {
            E1 | E2 => 1,
            E3 => 2,
            E4 => 3,
            E5 => 4,
            E6 => 5,
            E7 | E8 => 6,
            E9 | E10 => 7,
            E11 => 8,
            E12 => 9,
        })
    }

    /// Ground-truth matrix, `X{i}test` for prediction `X{i}pred`.
    pub fn truth_key(self) -> String {
        self.pred_key().test_key()
    }

    pub fn train_keys(self) -> Vec<String> {
        use ScoreId::*;
        let ids: &[u8] = match self {
            E1 | E2 => &[1],
            E3 | E4 => &[2],
            E5 | E6 => &[3],
            E7 | E8 => &[4],
            E9 | E10 => &[5],
            E11 | E12 => &[6, 7, 8],
        };
        ids.iter().map(|i| format!("X{i}train")).collect()
    }

    pub fn burnin_key(self) -> Option<String> {
        match self {
            ScoreId::E11 => Some("X9train".into()),
            ScoreId::E12 => Some("X10train".into()),
            _ => None,
        }
    }
}

impl fmt::Display for ScoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScoreId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownKey(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Forecast,
    Reconstruction,
    Parametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "ST")]
    ShortTerm,
    #[serde(rename = "LT")]
    LongTerm,
}

/// One of `X1pred..X9pred`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredKey(u8);

impl PredKey {
    pub const ALL: [PredKey; 9] = [
        PredKey(1),
        PredKey(2),
        PredKey(3),
        PredKey(4),
        PredKey(5),
        PredKey(6),
        PredKey(7),
        PredKey(8),
        PredKey(9),
    ];

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn name(self) -> String {
        format!("X{}pred", self.0)
    }

    pub fn test_key(self) -> String {
        format!("X{}test", self.0)
    }

    /// Scores computed from this prediction.
    pub fn scores(self) -> Vec<ScoreId> {
        ScoreId::ALL
            .into_iter()
            .filter(|id| id.pred_key() == self)
            .collect()
    }

    /// The first score fed by this prediction determines how it is produced.
    pub fn primary_score(self) -> ScoreId {
        self.scores()[0]
    }
}

impl fmt::Display for PredKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{}pred", self.0)
    }
}

impl FromStr for PredKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('X')
            .and_then(|rest| rest.strip_suffix("pred"))
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|n| (1..=9).contains(n) && s == format!("X{n}pred"))
            .map(PredKey)
            .ok_or_else(|| Error::UnknownKey(s.to_string()))
    }
}

impl Serialize for PredKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for PredKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Resolved wiring of one score for a concrete dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub score_id: ScoreId,
    pub task_kind: TaskKind,
    pub metric_kind: MetricKind,
    pub train_keys: Vec<String>,
    pub burnin_key: Option<String>,
    pub truth_key: String,
    pub pred_key: PredKey,
    pub pred_shape: (usize, usize),
}

impl TaskSpec {
    pub fn new(score_id: ScoreId, pred_shape: (usize, usize)) -> Self {
        Self {
            score_id,
            task_kind: score_id.task_kind(),
            metric_kind: score_id.metric_kind(),
            train_keys: score_id.train_keys(),
            burnin_key: score_id.burnin_key(),
            truth_key: score_id.truth_key(),
            pred_key: score_id.pred_key(),
            pred_shape,
        }
    }
}
