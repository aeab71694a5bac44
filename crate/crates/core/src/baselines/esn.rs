//! Leaky echo state networks with a ridge readout, run as parallel
//! reservoirs over contiguous channel groups.
//!
//! Each group owns a contiguous block of channels and sees that block plus
//! `L` neighbours on each side (wrapping around the sensor ring). Its
//! readout predicts only the owned channels; in the autonomous loop the
//! group outputs are concatenated back into a full state before the next
//! step.

use std::sync::Arc;

use faer::Mat;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{eigenvalues, spd_solve};
use crate::error::{Error, Result};
use crate::matrix::TimeSeriesMatrix;

/// Field names follow the usual reservoir notation (`N_h`, `L`, ...).
/// Missing fields take their default values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsnConfig {
    #[serde(rename = "N_h")]
    pub reservoir_size: usize,
    /// Leak rate.
    pub alpha: f64,
    /// Input weight scale.
    pub sigma: f64,
    /// Constant bias inside the nonlinearity.
    pub sigma_b: f64,
    /// Target spectral radius of the recurrent matrix.
    pub rho: f64,
    pub density: f64,
    /// Tikhonov weight of the readout.
    pub beta: f64,
    #[serde(rename = "N_spin")]
    pub spinup: usize,
    /// Number of parallel reservoirs.
    pub g: usize,
    /// Neighbour channels on each side fed to a group.
    #[serde(rename = "L")]
    pub locality: usize,
    pub seed: u64,
}

impl Default for EsnConfig {
    fn default() -> Self {
        Self {
            reservoir_size: 500,
            alpha: 1.0,
            sigma: 0.1,
            sigma_b: 0.0,
            rho: 0.6,
            density: 0.02,
            beta: 1e-6,
            spinup: 100,
            g: 1,
            locality: 0,
            seed: 0,
        }
    }
}

impl EsnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.reservoir_size == 0 {
            return bad("N_h must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density must lie in (0, 1]");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || !self.sigma_b.is_finite() {
            return bad("sigma must be non-negative and sigma_b finite");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be non-negative");
        }
        if self.g == 0 {
            return bad("g must be at least 1");
        }
        Ok(())
    }
}

/// Channels owned by each group and the wrapped input neighbourhood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelGroup {
    pub owned: std::ops::Range<usize>,
    pub inputs: Vec<usize>,
}

/// Splits `n` channels into `g` contiguous groups; the last group absorbs
/// the remainder.
pub fn channel_groups(n: usize, g: usize, locality: usize) -> Result<Vec<ChannelGroup>> {
    if g == 0 || g > n {
        return Err(Error::Config(format!("cannot split {n} channels into {g} groups")));
    }
    let base = n / g;
    Ok((0..g)
        .map(|i| {
            let start = i * base;
            let end = if i + 1 == g { n } else { start + base };
            let inputs = (start as isize - locality as isize..(end + locality) as isize)
                .map(|c| c.rem_euclid(n as isize) as usize)
                .collect();
            ChannelGroup { owned: start..end, inputs }
        })
        .collect())
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
struct Sparse {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    n: usize,
}

impl Sparse {
    fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            *o += self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(|(&c, v)| v * x[c])
                .sum::<f64>();
        }
    }

    fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] = self.vals[k];
            }
        }
        m
    }
}

/// Random recurrent and input weights of one group.
#[derive(Debug, Clone)]
pub struct Reservoir {
    w_hh: Sparse,
    /// Row-major `N_h x inputs`.
    w_hu: Vec<f64>,
    group: ChannelGroup,
}

impl Reservoir {
    fn build(cfg: &EsnConfig, group: ChannelGroup, stream: u64) -> Result<Self> {
        let nh = cfg.reservoir_size;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let per_row = ((cfg.density * nh as f64).round() as usize).clamp(1, nh);
        let mut row_ptr = Vec::with_capacity(nh + 1);
        let mut cols = Vec::with_capacity(nh * per_row);
        let mut vals = Vec::with_capacity(nh * per_row);
        row_ptr.push(0);
        for _ in 0..nh {
            let mut picked = sample(&mut rng, nh, per_row).into_vec();
            picked.sort_unstable();
            for c in picked {
                cols.push(c);
                vals.push(rng.random_range(-1.0..1.0));
            }
            row_ptr.push(cols.len());
        }
        let mut w_hh = Sparse { row_ptr, cols, vals, n: nh };
        let radius = dense_spectral_radius(&w_hh.to_dense())?;
        if !(radius > f64::MIN_POSITIVE) {
            return Err(Error::Degenerate("recurrent matrix is nilpotent".into()));
        }
        let scale = cfg.rho / radius;
        for v in &mut w_hh.vals {
            *v *= scale;
        }
        let ni = group.inputs.len();
        let w_hu = (0..nh * ni)
            .map(|_| {
                if cfg.sigma > 0.0 {
                    rng.random_range(-cfg.sigma..=cfg.sigma)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { w_hh, w_hu, group })
    }

    pub fn group(&self) -> &ChannelGroup {
        &self.group
    }

    pub fn size(&self) -> usize {
        self.w_hh.n
    }

    /// Dense copy of the rescaled recurrent matrix.
    pub fn recurrent_dense(&self) -> Vec<Vec<f64>> {
        let m = self.w_hh.to_dense();
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
    }

    /// Row-major `N_h x inputs` input weights.
    pub fn input_weights(&self) -> &[f64] {
        &self.w_hu
    }

    /// `h <- (1 - alpha) h + alpha tanh(W_hh h + W_hu u + sigma_b)`, with
    /// `u` the full channel vector.
    fn step(&self, h: &mut [f64], u: &[f64], alpha: f64, bias: f64, scratch: &mut [f64]) {
        let ni = self.group.inputs.len();
        for (i, s) in scratch.iter_mut().enumerate() {
            let row = &self.w_hu[i * ni..(i + 1) * ni];
            *s = bias
                + row
                    .iter()
                    .zip(&self.group.inputs)
                    .map(|(w, &c)| w * u[c])
                    .sum::<f64>();
        }
        self.w_hh.mul_add(h, scratch);
        for (hi, &s) in h.iter_mut().zip(scratch.iter()) {
            *hi = (1.0 - alpha) * *hi + alpha * s.tanh();
        }
    }
}

/// Largest eigenvalue modulus of a dense square matrix.
fn dense_spectral_radius(m: &Mat<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Spectral radius of a dense row-major square matrix.
pub fn spectral_radius(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("matrix is not square".into()));
    }
    dense_spectral_radius(&Mat::from_fn(n, n, |i, j| rows[i][j]))
}

/// The random part of a parallel ESN. It depends only on the channel count
/// and on `N_h`, `rho`, `density`, `sigma`, `g`, `L` and `seed`, so one set
/// can serve several fits.
#[derive(Debug, Clone)]
pub struct ReservoirSet {
    channels: usize,
    key: (usize, u64, u64, u64, usize, usize, u64),
    groups: Vec<Reservoir>,
}

fn reservoir_key(cfg: &EsnConfig) -> (usize, u64, u64, u64, usize, usize, u64) {
    (
        cfg.reservoir_size,
        cfg.rho.to_bits(),
        cfg.density.to_bits(),
        cfg.sigma.to_bits(),
        cfg.g,
        cfg.locality,
        cfg.seed,
    )
}

impl ReservoirSet {
    pub fn new(cfg: &EsnConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        let layout = channel_groups(channels, cfg.g, cfg.locality)?;
        let groups = layout
            .into_par_iter()
            .enumerate()
            .map(|(i, group)| Reservoir::build(cfg, group, i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            channels,
            key: reservoir_key(cfg),
            groups,
        })
    }

    /// Whether this set was built for `cfg` on `channels` channels.
    pub fn matches(&self, cfg: &EsnConfig, channels: usize) -> bool {
        self.channels == channels && self.key == reservoir_key(cfg)
    }

    pub fn groups(&self) -> &[Reservoir] {
        &self.groups
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

/// `g(h)`: odd-indexed entries squared.
fn features(h: &[f64], out: &mut [f64]) {
    for (i, (o, &v)) in out.iter_mut().zip(h).enumerate() {
        *o = if i % 2 == 1 { v * v } else { v };
    }
}

/// Ridge regression readout: returns `W^T` (`features x outputs`) solving
/// `(G^T G + beta I) W^T = G^T Y`.
pub fn ridge_readout(g: &TimeSeriesMatrix, y: &TimeSeriesMatrix, beta: f64) -> Result<TimeSeriesMatrix> {
    if g.rows() != y.rows() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} target rows",
            g.rows(),
            y.rows()
        )));
    }
    let gm = Mat::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j));
    let ym = Mat::from_fn(y.rows(), y.cols(), |i, j| y.get(i, j));
    let w = ridge(&gm, &ym, beta)?;
    Ok(TimeSeriesMatrix::from_raw(
        w.nrows(),
        w.ncols(),
        (0..w.nrows()).flat_map(|i| (0..w.ncols()).map(move |j| (i, j))).map(|(i, j)| w[(i, j)]).collect(),
    ))
}

fn ridge(g: &Mat<f64>, y: &Mat<f64>, beta: f64) -> Result<Mat<f64>> {
    let mut gram = g.transpose() * g;
    for i in 0..gram.nrows() {
        gram[(i, i)] += beta;
    }
    let rhs = g.transpose() * y;
    let w = spd_solve(&gram, &rhs)?;
    if (0..w.ncols()).any(|j| (0..w.nrows()).any(|i| !w[(i, j)].is_finite())) {
        return Err(Error::Numeric("ridge solution is not finite".into()));
    }
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct EsnModel {
    config: EsnConfig,
    reservoirs: Arc<ReservoirSet>,
    /// Per group, `N_h x owned` (the transposed readout).
    readouts: Vec<Mat<f64>>,
    /// Per group, the state after the last input row.
    state: Vec<Vec<f64>>,
    /// Teacher-forced outputs over the last training trajectory.
    fitted: TimeSeriesMatrix,
    dt: Option<f64>,
}

/// Fits a parallel ESN to one trajectory.
pub fn esn_fit(train: &TimeSeriesMatrix, cfg: &EsnConfig) -> Result<EsnModel> {
    let set = Arc::new(ReservoirSet::new(cfg, train.cols())?);
    esn_fit_with(set, &[train], cfg)
}

/// Fits the readouts on the pooled spin-up-trimmed pairs of several
/// trajectories, reusing prebuilt reservoirs.
pub fn esn_fit_with(
    reservoirs: Arc<ReservoirSet>,
    trajectories: &[&TimeSeriesMatrix],
    cfg: &EsnConfig,
) -> Result<EsnModel> {
    cfg.validate()?;
    let last = *trajectories
        .last()
        .ok_or_else(|| Error::Shape("no training trajectories".into()))?;
    let n = last.cols();
    if !reservoirs.matches(cfg, n) {
        return Err(Error::Config("reservoir set was built for a different config".into()));
    }
    for t in trajectories {
        if t.cols() != n {
            return Err(Error::Shape("trajectories differ in width".into()));
        }
        if t.rows() <= cfg.spinup + 1 {
            return Err(Error::Shape(format!(
                "{} rows leave no training pairs after a spin-up of {}",
                t.rows(),
                cfg.spinup
            )));
        }
    }
    let nh = cfg.reservoir_size;
    let spin = cfg.spinup;

    struct GroupFit {
        readout: Mat<f64>,
        state: Vec<f64>,
        fitted: Vec<f64>,
    }

    let fits = reservoirs
        .groups()
        .par_iter()
        .map(|res| -> Result<GroupFit> {
            let owned = res.group.owned.clone();
            let width = owned.len();
            let pairs: usize = trajectories.iter().map(|t| t.rows() - 1 - spin).sum();
            let mut g = Mat::<f64>::zeros(pairs, nh);
            let mut y = Mat::<f64>::zeros(pairs, width);
            let mut h = vec![0.0; nh];
            let mut scratch = vec![0.0; nh];
            let mut feat = vec![0.0; nh];
            let mut row = 0;
            // States of the last trajectory, kept for the teacher-forced fit.
            let mut last_states = Vec::new();
            for (k, traj) in trajectories.iter().enumerate() {
                h.iter_mut().for_each(|v| *v = 0.0);
                let is_last = k + 1 == trajectories.len();
                for i in 0..traj.rows() {
                    // h now summarizes rows 0..i.
                    if i > spin {
                        features(&h, &mut feat);
                        for (j, &f) in feat.iter().enumerate() {
                            g[(row, j)] = f;
                        }
                        for (j, c) in owned.clone().enumerate() {
                            y[(row, j)] = traj.get(i, c);
                        }
                        row += 1;
                        if is_last {
                            last_states.push(feat.clone());
                        }
                    }
                    res.step(&mut h, traj.row(i), cfg.alpha, cfg.sigma_b, &mut scratch);
                }
            }
            let readout = ridge(&g, &y, cfg.beta)?;
            let mut fitted = Vec::with_capacity(last_states.len() * width);
            for f in &last_states {
                for j in 0..width {
                    fitted.push((0..nh).map(|q| f[q] * readout[(q, j)]).sum::<f64>());
                }
            }
            Ok(GroupFit { readout, state: h, fitted })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = last.rows();
    let mut fitted = last.values().to_vec();
    for (res, fit) in reservoirs.groups().iter().zip(&fits) {
        let owned = res.group.owned.clone();
        let width = owned.len();
        for (r, chunk) in fit.fitted.chunks_exact(width).enumerate() {
            let i = spin + 1 + r;
            fitted[i * n + owned.start..i * n + owned.end].copy_from_slice(chunk);
        }
    }
    let (readouts, state) = fits.into_iter().map(|f| (f.readout, f.state)).unzip();
    Ok(EsnModel {
        config: *cfg,
        reservoirs,
        readouts,
        state,
        fitted: TimeSeriesMatrix::from_raw(rows, n, fitted).with_dt(last.dt()),
        dt: last.dt(),
    })
}

impl EsnModel {
    pub fn config(&self) -> &EsnConfig {
        &self.config
    }

    pub fn reservoirs(&self) -> &ReservoirSet {
        &self.reservoirs
    }

    /// Transposed readout of group `i` as a `N_h x owned` matrix.
    pub fn readout(&self, i: usize) -> TimeSeriesMatrix {
        let w = &self.readouts[i];
        TimeSeriesMatrix::from_fn(w.nrows(), w.ncols(), |a, b| w[(a, b)])
    }

    fn predict_into(&self, out: &mut [f64], feat: &mut [f64]) {
        for ((res, w), h) in self.reservoirs.groups().iter().zip(&self.readouts).zip(&self.state) {
            features(h, feat);
            for (j, c) in res.group.owned.clone().enumerate() {
                out[c] = (0..w.nrows()).map(|q| feat[q] * w[(q, j)]).sum();
            }
        }
    }

    /// Closes the loop for `steps` rows following the last input.
    pub fn forecast(&self, steps: usize) -> TimeSeriesMatrix {
        let n = self.reservoirs.channels();
        let nh = self.config.reservoir_size;
        let mut model = self.clone();
        let mut values = vec![0.0; steps * n];
        let mut feat = vec![0.0; nh];
        let mut scratch = vec![0.0; nh];
        for s in 0..steps {
            let row = &mut values[s * n..(s + 1) * n];
            model.predict_into(row, &mut feat);
            if s + 1 < steps {
                for (res, h) in model.reservoirs.groups().iter().zip(model.state.iter_mut()) {
                    res.step(h, row, self.config.alpha, self.config.sigma_b, &mut scratch);
                }
            }
        }
        TimeSeriesMatrix::from_raw(steps, n, values).with_dt(self.dt)
    }

    /// Teacher-forced outputs over the last training trajectory; the first
    /// `N_spin + 1` rows are copied from the input.
    pub fn reconstruct(&self) -> TimeSeriesMatrix {
        self.fitted.clone()
    }

    /// Same readouts, state re-driven from zero through `burnin`.
    pub fn warm_started(&self, burnin: &TimeSeriesMatrix) -> Result<EsnModel> {
        let n = self.reservoirs.channels();
        if burnin.cols() != n {
            return Err(Error::Shape(format!("expected {n} channels, got {}", burnin.cols())));
        }
        let nh = self.config.reservoir_size;
        let mut model = self.clone();
        let mut scratch = vec![0.0; nh];
        for (res, h) in model.reservoirs.groups().iter().zip(model.state.iter_mut()) {
            h.iter_mut().for_each(|v| *v = 0.0);
            for row in burnin.row_iter() {
                res.step(h, row, self.config.alpha, self.config.sigma_b, &mut scratch);
            }
        }
        model.fitted = burnin.clone();
        model.dt = burnin.dt().or(self.dt);
        Ok(model)
    }

    /// Largest absolute state entry over all groups.
    pub fn state_max_abs(&self) -> f64 {
        self.state.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }
}
