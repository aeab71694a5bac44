//! Dataset configurations and the generation of the twelve-task train/test
//! matrices from a source trajectory.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::{Bundle, HiddenParams, TrainView};
use crate::error::{Error, Result};
use crate::matrix::{add_noise, NoiseSpec, TimeSeriesMatrix};
use crate::task::{ScoreId, TaskKind, TaskSpec};

/// Default relative noise amplitudes for the low and high regimes.
pub const NOISE_LOW: f64 = 0.1;
pub const NOISE_HIGH: f64 = 1.0;

/// Fraction of a training matrix used for fitting during tuning.
pub const TUNING_TRAIN_FRACTION: f64 = 0.8;

pub const TRAIN_KEYS: [&str; 10] = [
    "X1train", "X2train", "X3train", "X4train", "X5train", "X6train", "X7train", "X8train",
    "X9train", "X10train",
];
pub const TEST_KEYS: [&str; 9] = [
    "X1test", "X2test", "X3test", "X4test", "X5test", "X6test", "X7test", "X8test", "X9test",
];

/// Half-open range of source time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    /// Spatial dimension of the main trajectory.
    pub n: usize,
    /// Spatial dimension of the parametric trajectories, when it differs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_parametric: Option<usize>,
    /// Forecast block length.
    pub m: usize,
    /// Limited-data and burn-in block length.
    #[serde(rename = "M")]
    pub limited_m: usize,
    pub dt: f64,
    /// Rows feeding the short-term score (first k) and the spectrum (last k).
    pub k_split: usize,
    pub kmax: usize,
    pub noise_low: NoiseSpec,
    pub noise_high: NoiseSpec,
    pub index_table: BTreeMap<String, IndexRange>,
}

impl DatasetConfig {
    /// Layout shared by every shipped dataset: a training window
    /// `[0, train_len)`, a limited window made of its last `limited_len`
    /// rows, and a future window `[train_len, train_len + test_len)`.
    #[allow(clippy::too_many_arguments)]
    pub fn standard(
        name: &str,
        n: usize,
        n_parametric: Option<usize>,
        m: usize,
        limited_m: usize,
        dt: f64,
        train_len: usize,
        test_len: usize,
        k_split: usize,
        seed: u64,
    ) -> Self {
        let train = IndexRange::new(0, train_len);
        let limited = IndexRange::new(train_len - limited_m, train_len);
        let future = IndexRange::new(train_len, train_len + test_len);
        let mut index_table = BTreeMap::new();
        for key in ["X1train", "X2train", "X3train", "X6train", "X7train", "X8train"] {
            index_table.insert(key.to_string(), train);
        }
        for key in ["X4train", "X5train", "X9train", "X10train"] {
            index_table.insert(key.to_string(), limited);
        }
        for key in ["X2test", "X4test"] {
            index_table.insert(key.to_string(), train);
        }
        for key in ["X1test", "X3test", "X5test", "X6test", "X7test", "X8test", "X9test"] {
            index_table.insert(key.to_string(), future);
        }
        Self {
            name: name.to_string(),
            n,
            n_parametric,
            m,
            limited_m,
            dt,
            k_split,
            kmax: 100,
            noise_low: NoiseSpec {
                sigma_rel: NOISE_LOW,
                seed,
            },
            noise_high: NoiseSpec {
                sigma_rel: NOISE_HIGH,
                seed: seed ^ 0x9e37_79b9_7f4a_7c15,
            },
            index_table,
        }
    }

    /// Global wavefields: 2048 sensors at 1 Hz.
    pub fn global_wavefields() -> Self {
        Self::standard("global-wavefields", 2048, None, 500, 500, 1.0, 2000, 1000, 500, 0)
    }

    /// Distributed acoustic sensing: 3000 channels at 5 Hz.
    pub fn das() -> Self {
        Self::standard("das", 3000, None, 500, 500, 0.2, 2000, 1000, 500, 0)
    }

    /// 3D crustal wavefields: 62451 channels, 26508 for the parametric
    /// trajectories, 50 Hz.
    pub fn crustal() -> Self {
        Self::standard("crustal", 62451, Some(26508), 250, 200, 0.02, 500, 100, 50, 0)
    }

    /// Desk-scale layout at roughly 1/8 of the global dataset
    /// (`m = 64`, `n = 256`).
    pub fn desk(name: &str, seed: u64) -> Self {
        Self::standard(name, 256, None, 64, 64, 1.0, 256, 128, 64, seed)
    }

    pub fn shipped(name: &str) -> Option<Self> {
        match name {
            "global-wavefields" | "global" => Some(Self::global_wavefields()),
            "das" => Some(Self::das()),
            "crustal" => Some(Self::crustal()),
            _ => None,
        }
    }

    pub fn is_parametric_key(key: &str) -> bool {
        matches!(
            key,
            "X6train" | "X7train" | "X8train" | "X9train" | "X10train" | "X8test" | "X9test"
        )
    }

    pub fn parametric_n(&self) -> usize {
        self.n_parametric.unwrap_or(self.n)
    }

    pub fn range(&self, key: &str) -> Result<IndexRange> {
        self.index_table
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingMatrix(key.to_string()))
    }

    /// `[rows, cols]` of a named matrix.
    pub fn shape_of(&self, key: &str) -> Result<(usize, usize)> {
        let range = self.range(key)?;
        let cols = if Self::is_parametric_key(key) {
            self.parametric_n()
        } else {
            self.n
        };
        Ok((range.len(), cols))
    }

    pub fn task(&self, id: ScoreId) -> Result<TaskSpec> {
        Ok(TaskSpec::new(id, self.shape_of(&id.truth_key())?))
    }

    pub fn tasks(&self) -> Result<Vec<TaskSpec>> {
        ScoreId::ALL.into_iter().map(|id| self.task(id)).collect()
    }

    /// Source length required by the main and parametric trajectories.
    pub fn required_lengths(&self) -> (usize, usize) {
        let mut main = 0;
        let mut param = 0;
        for (key, r) in &self.index_table {
            if Self::is_parametric_key(key) {
                param = param.max(r.end);
            } else {
                main = main.max(r.end);
            }
        }
        (main, param)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.m == 0 || self.parametric_n() == 0 {
            return bad("n and m must be positive".into());
        }
        if self.k_split == 0 || self.k_split > 2 * self.m {
            return bad(format!("k_split must lie in (0, 2m], got {}", self.k_split));
        }
        if self.limited_m > self.m {
            return bad(format!("M = {} exceeds m = {}", self.limited_m, self.m));
        }
        if self.kmax == 0 {
            return bad("kmax must be positive".into());
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive".into());
        }
        self.noise_low.validate()?;
        self.noise_high.validate()?;
        for key in TRAIN_KEYS.iter().chain(TEST_KEYS.iter()) {
            let r = self.range(key)?;
            if r.is_empty() {
                return bad(format!("{key} has an empty index range"));
            }
        }
        if let Some(extra) = self
            .index_table
            .keys()
            .find(|k| !TRAIN_KEYS.contains(&k.as_str()) && !TEST_KEYS.contains(&k.as_str()))
        {
            return bad(format!("unknown matrix {extra} in index table"));
        }
        for id in ScoreId::ALL {
            let (rows, cols) = self.shape_of(&id.truth_key())?;
            if id.task_kind() != TaskKind::Reconstruction && self.k_split > rows {
                return bad(format!(
                    "k_split {} exceeds the {rows} rows of {}",
                    self.k_split,
                    id.truth_key()
                ));
            }
            if id.metric_kind() == crate::task::MetricKind::LongTerm && cols < 2 * self.kmax + 2 {
                return bad(format!(
                    "{} needs at least {} columns for kmax {}",
                    id.name(),
                    2 * self.kmax + 2,
                    self.kmax
                ));
            }
        }
        Ok(())
    }
}

/// Seed for a named matrix, independent of generation order.
pub fn derive_seed(base: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Five trajectories of a parametric family: three for training, then one
/// interpolation and one extrapolation case.
#[derive(Debug, Clone)]
pub struct ParametricFamily {
    pub trajectories: Vec<TimeSeriesMatrix>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SplitSource {
    pub main: TimeSeriesMatrix,
    pub family: Option<ParametricFamily>,
}

/// Cuts every train and test matrix out of `source` according to `cfg`.
pub fn make_splits(source: &SplitSource, cfg: &DatasetConfig) -> Result<Bundle> {
    cfg.validate()?;
    let (main_len, param_len) = cfg.required_lengths();
    if source.main.rows() < main_len {
        return Err(Error::Shape(format!(
            "source has {} rows, the index table needs {main_len}",
            source.main.rows()
        )));
    }
    if source.main.cols() != cfg.n {
        return Err(Error::Shape(format!(
            "source has {} columns, config says n = {}",
            source.main.cols(),
            cfg.n
        )));
    }
    let family = source
        .family
        .as_ref()
        .filter(|f| f.trajectories.len() >= 5)
        .ok_or_else(|| {
            Error::MissingMatrix("parametric family with at least 5 trajectories".into())
        })?;
    for (i, t) in family.trajectories.iter().enumerate() {
        if t.rows() < param_len || t.cols() != cfg.parametric_n() {
            return Err(Error::Shape(format!(
                "parametric trajectory {i} is [{},{}], need at least [{param_len},{}]",
                t.rows(),
                t.cols(),
                cfg.parametric_n()
            )));
        }
    }

    let cut = |m: &TimeSeriesMatrix, key: &str| -> Result<TimeSeriesMatrix> {
        let r = cfg.range(key)?;
        Ok(m.slice_rows(r.start, r.end)?.with_dt(Some(cfg.dt)))
    };
    let noisy = |key: &str, spec: &NoiseSpec| -> Result<TimeSeriesMatrix> {
        let clean = cut(&source.main, key)?;
        Ok(add_noise(&clean, &spec.with_seed(derive_seed(spec.seed, key))))
    };
    let traj = &family.trajectories;

    let mut train = BTreeMap::new();
    train.insert("X1train".into(), cut(&source.main, "X1train")?);
    train.insert("X2train".into(), noisy("X2train", &cfg.noise_low)?);
    train.insert("X3train".into(), noisy("X3train", &cfg.noise_high)?);
    train.insert("X4train".into(), cut(&source.main, "X4train")?);
    train.insert("X5train".into(), noisy("X5train", &cfg.noise_high)?);
    train.insert("X6train".into(), cut(&traj[0], "X6train")?);
    train.insert("X7train".into(), cut(&traj[1], "X7train")?);
    train.insert("X8train".into(), cut(&traj[2], "X8train")?);
    train.insert("X9train".into(), cut(&traj[3], "X9train")?);
    train.insert("X10train".into(), cut(&traj[4], "X10train")?);

    let mut test = BTreeMap::new();
    for key in &TEST_KEYS[..7] {
        test.insert(key.to_string(), cut(&source.main, key)?);
    }
    test.insert("X8test".into(), cut(&traj[3], "X8test")?);
    test.insert("X9test".into(), cut(&traj[4], "X9test")?);

    let hidden = HiddenParams {
        params: family.params.clone(),
    };
    Ok(Bundle::from_parts(cfg.clone(), train, Some(test), Some(hidden)))
}

/// Partition of the training data used while tuning. Test matrices are never
/// involved.
#[derive(Debug, Clone)]
pub struct TuningSplit {
    pub train: Vec<TimeSeriesMatrix>,
    /// Target the tuned method is scored against.
    pub validation: TimeSeriesMatrix,
    pub burnin: Option<TimeSeriesMatrix>,
}

pub fn make_tuning_split(task: &TaskSpec, view: &TrainView<'_>) -> Result<TuningSplit> {
    match task.score_id {
        ScoreId::E11 => parametric_split(view, &["X6train", "X8train"], "X7train"),
        ScoreId::E12 => parametric_split(view, &["X6train", "X7train"], "X8train"),
        _ => {
            let key = &task.train_keys[0];
            let source = view.get(key)?;
            let cut = tuning_cut(source.rows())?;
            let train = source.slice_rows(0, cut)?;
            let validation = if task.task_kind == TaskKind::Reconstruction {
                // The clean counterpart of the noisy training window.
                let clean = view.get("X1train")?;
                if clean.shape() != source.shape() {
                    return Err(Error::Shape(format!(
                        "X1train {:?} does not match {key} {:?}",
                        clean.shape(),
                        source.shape()
                    )));
                }
                clean.slice_rows(cut, clean.rows())?
            } else {
                source.slice_rows(cut, source.rows())?
            };
            Ok(TuningSplit {
                train: vec![train],
                validation,
                burnin: None,
            })
        }
    }
}

/// Number of leading rows used for fitting: the first 80%.
pub fn tuning_cut(rows: usize) -> Result<usize> {
    let cut = (rows as f64 * TUNING_TRAIN_FRACTION).floor() as usize;
    if cut == 0 || cut >= rows {
        return Err(Error::Shape(format!(
            "{rows} rows are too few for an 80/20 tuning split"
        )));
    }
    Ok(cut)
}

fn parametric_split(view: &TrainView<'_>, train_keys: &[&str], held_out: &str) -> Result<TuningSplit> {
    let train = train_keys
        .iter()
        .map(|k| view.get(k).cloned())
        .collect::<Result<Vec<_>>>()?;
    let held = view.get(held_out)?;
    let cfg = view.config();
    let burn = cfg.limited_m.max(1);
    let horizon_target = cfg.shape_of("X8test")?.0;
    if held.rows() <= burn {
        return Err(Error::Shape(format!(
            "{held_out} has {} rows, burn-in needs {burn} plus a validation window",
            held.rows()
        )));
    }
    let horizon = horizon_target.min(held.rows() - burn);
    let end = held.rows();
    let burnin = held.slice_rows(end - horizon - burn, end - horizon)?;
    let validation = held.slice_rows(end - horizon, end)?;
    Ok(TuningSplit {
        train,
        validation,
        burnin: Some(burnin),
    })
}
