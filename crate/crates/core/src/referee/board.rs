use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use super::LedgerEntry;
use crate::error::{Error, Result};
use crate::json::Sig17;
use crate::metrics::ScoreMap;
use crate::task::ScoreId;

/// Which submission represents a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoardView {
    /// Highest composite.
    #[default]
    Best,
    /// Most recently appended.
    Latest,
}

impl FromStr for BoardView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(BoardView::Best),
            "latest" => Ok(BoardView::Latest),
            other => Err(Error::Config(format!("unknown leaderboard view {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoardRow {
    pub method: String,
    pub composite: f64,
    pub scores: ScoreMap<f64>,
    pub submission_id: String,
    pub submitted_at: String,
}

impl Serialize for BoardRow {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(16))?;
        map.serialize_entry("Method", &self.method)?;
        map.serialize_entry("AvgScore", &Sig17(self.composite))?;
        for (id, v) in self.scores.iter() {
            map.serialize_entry(id.name(), &Sig17(v))?;
        }
        map.serialize_entry("submission_id", &self.submission_id)?;
        map.serialize_entry("submitted_at", &self.submitted_at)?;
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leaderboard {
    pub dataset: String,
    pub view: BoardView,
    pub columns: Vec<String>,
    pub rows: Vec<BoardRow>,
}

fn columns() -> Vec<String> {
    ["Method", "AvgScore"]
        .into_iter()
        .map(String::from)
        .chain(ScoreId::ALL.iter().map(|id| id.name().to_string()))
        .collect()
}

/// One row per method for `dataset`, ordered by composite (descending),
/// then earlier submission, then method name. A pure fold over the ledger.
pub fn leaderboard(entries: &[LedgerEntry], dataset: &str, view: BoardView) -> Leaderboard {
    let mut chosen: BTreeMap<&str, &LedgerEntry> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.report.dataset == dataset) {
        let slot = chosen.entry(e.report.method.as_str()).or_insert(e);
        let replace = match view {
            BoardView::Latest => true,
            BoardView::Best => {
                let (a, b) = (e.report.composite, slot.report.composite);
                a > b || (a == b && e.submitted_at < slot.submitted_at)
            }
        };
        if replace {
            *slot = e;
        }
    }
    let mut rows: Vec<BoardRow> = chosen
        .into_values()
        .map(|e| BoardRow {
            method: e.report.method.clone(),
            composite: e.report.composite,
            scores: e.report.scores,
            submission_id: e.submission_id.clone(),
            submitted_at: e.submitted_at.clone(),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.composite
            .total_cmp(&a.composite)
            .then_with(|| a.submitted_at.cmp(&b.submitted_at))
            .then_with(|| a.method.cmp(&b.method))
    });
    Leaderboard {
        dataset: dataset.to_string(),
        view,
        columns: columns(),
        rows,
    }
}

impl Leaderboard {
    /// The JSON document served over HTTP and printed by `board --json`,
    /// newline-terminated.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("leaderboard serializes") + "\n"
    }

    /// Fixed-width text table: `Method AvgScore E1 .. E12`.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .chain(std::iter::once("Method".len()))
            .max()
            .unwrap_or(6);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}  {:>8}", "Method", "AvgScore");
        for id in ScoreId::ALL {
            let _ = write!(out, "  {:>7}", id.name());
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}  {:>8.2}", r.method, r.composite);
            for (_, v) in r.scores.iter() {
                let _ = write!(out, "  {v:>7.2}");
            }
            out.push('\n');
        }
        out
    }
}
