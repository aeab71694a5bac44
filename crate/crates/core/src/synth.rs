//! Deterministic synthetic datasets with known ground truth: linear swell
//! obeying the finite-depth dispersion relation, random low-rank linear
//! systems, and a Gaussian pulse travelling around a ring of sensors.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::matrix::{normalize, TimeSeriesMatrix};
use crate::splits::{derive_seed, make_splits, DatasetConfig, ParametricFamily, SplitSource};

pub const GRAVITY: f64 = 9.81;

/// Angular frequency of a surface gravity wave, `sqrt(g k tanh(k h))`.
pub fn dispersion(k: f64, depth: f64, gravity: f64) -> f64 {
    (gravity * k * (k * depth).tanh()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwellMode {
    /// Wavenumber in rad/m.
    pub k: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwellConfig {
    pub channels: usize,
    /// Sensor spacing in metres.
    pub channel_spacing: f64,
    pub dt: f64,
    pub steps: usize,
    pub depth: f64,
    pub gravity: f64,
    pub modes: Vec<SwellMode>,
}

impl SwellConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels == 0 || self.steps == 0 {
            return bad("channels and steps must be positive".into());
        }
        if !(self.depth > 0.0 && self.gravity > 0.0 && self.dt > 0.0 && self.channel_spacing > 0.0) {
            return bad("depth, gravity, dt and channel_spacing must be positive".into());
        }
        if self.modes.is_empty() {
            return bad("at least one mode is required".into());
        }
        for m in &self.modes {
            if !(m.k > 0.0 && m.k.is_finite()) {
                return bad(format!("wavenumber {} must be positive", m.k));
            }
            let w = dispersion(m.k, self.depth, self.gravity);
            if w * self.dt >= PI {
                return bad(format!(
                    "mode k = {} has omega dt = {:.3} >= pi; reduce dt",
                    m.k,
                    w * self.dt
                ));
            }
            if m.k * self.channel_spacing >= PI {
                return bad(format!("mode k = {} is spatially aliased", m.k));
            }
        }
        Ok(())
    }
}

/// Raw superposition `sum a cos(k x - omega(k) t + phi)` without
/// normalization.
pub fn swell_field(cfg: &SwellConfig) -> Result<TimeSeriesMatrix> {
    cfg.validate()?;
    let omegas: Vec<f64> = cfg
        .modes
        .iter()
        .map(|m| dispersion(m.k, cfg.depth, cfg.gravity))
        .collect();
    Ok(TimeSeriesMatrix::from_fn(cfg.steps, cfg.channels, |i, j| {
        let t = i as f64 * cfg.dt;
        let x = j as f64 * cfg.channel_spacing;
        cfg.modes
            .iter()
            .zip(&omegas)
            .map(|(m, w)| m.amplitude * (m.k * x - w * t + m.phase).cos())
            .sum()
    })
    .with_dt(Some(cfg.dt)))
}

/// Normalized swell field.
pub fn gen_swell(cfg: &SwellConfig) -> Result<TimeSeriesMatrix> {
    let (m, _) = normalize(&swell_field(cfg)?)?;
    Ok(m.with_dt(Some(cfg.dt)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystemConfig {
    pub dimension: usize,
    /// Eigenvalues as `(re, im)`, closed under conjugation. Its length is
    /// the rank.
    pub spectrum: Vec<(f64, f64)>,
    pub steps: usize,
    pub seed: u64,
}

/// Real 1x1 and 2x2 rotation-scaling blocks for a conjugate-closed
/// spectrum.
fn real_blocks(spectrum: &[(f64, f64)]) -> Result<Vec<Vec<[f64; 2]>>> {
    let mut used = vec![false; spectrum.len()];
    let mut blocks = Vec::new();
    for (i, &(re, im)) in spectrum.iter().enumerate() {
        if used[i] {
            continue;
        }
        if !(re.is_finite() && im.is_finite()) || re.hypot(im) > 1.0 + 1e-12 {
            return Err(Error::Config(format!("eigenvalue {re}{im:+}i must have modulus <= 1")));
        }
        used[i] = true;
        if im == 0.0 {
            blocks.push(vec![[re, 0.0]]);
            continue;
        }
        let partner = (0..spectrum.len())
            .find(|&j| !used[j] && spectrum[j] == (re, -im))
            .ok_or_else(|| Error::Config(format!("eigenvalue {re}{im:+}i has no conjugate")))?;
        used[partner] = true;
        let b = im.abs();
        blocks.push(vec![[re, -b], [b, re]]);
    }
    Ok(blocks)
}

/// `r` orthonormal columns of length `n` (row-major `n x r`).
fn orthonormal_columns(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    while cols.len() < r {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    cols
}

/// Trajectory `x_{t+1} = A x_t` with `A = Q B Q^T`, `B` the real block
/// form of the spectrum and `Q` random orthonormal; `x_0` lies in the range
/// of `Q` so the snapshots have exact rank. Returns the trajectory and `A`.
pub fn gen_linear_system(cfg: &LinearSystemConfig) -> Result<(TimeSeriesMatrix, TimeSeriesMatrix)> {
    let n = cfg.dimension;
    let r = cfg.spectrum.len();
    if r == 0 || r > n || cfg.steps == 0 {
        return Err(Error::Config(format!(
            "need 1 <= rank <= dimension and steps > 0, got rank {r}, n {n}"
        )));
    }
    let blocks = real_blocks(&cfg.spectrum)?;
    let mut b = vec![vec![0.0; r]; r];
    let mut at = 0;
    for blk in &blocks {
        for (i, row) in blk.iter().enumerate() {
            for (j, v) in row.iter().take(blk.len()).enumerate() {
                b[at + i][at + j] = *v;
            }
        }
        at += blk.len();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let q = orthonormal_columns(n, r, &mut rng);
    // A[i][j] = sum_ab Q[a][i] B[a][b] Q[b][j]
    let qb: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..r).map(|bb| (0..r).map(|a| q[a][i] * b[a][bb]).sum()).collect())
        .collect();
    let a = TimeSeriesMatrix::from_fn(n, n, |i, j| (0..r).map(|bb| qb[i][bb] * q[bb][j]).sum());

    let z: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut x: Vec<f64> = (0..n).map(|i| (0..r).map(|c| q[c][i] * z[c]).sum()).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let mut values = Vec::with_capacity(cfg.steps * n);
    for _ in 0..cfg.steps {
        values.extend_from_slice(&x);
        x = (0..n)
            .map(|i| a.row(i).iter().zip(&x).map(|(p, q)| p * q).sum())
            .collect();
    }
    Ok((TimeSeriesMatrix::new(cfg.steps, n, values)?, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    /// Sensors on the ring.
    pub sensors: usize,
    /// Base speed in sensors per step; trajectory `p` moves at `speed * p`.
    pub speed: f64,
    /// Gaussian standard deviation in sensors.
    pub width: f64,
    pub steps: usize,
    /// Start position, in sensors.
    pub origin: f64,
}

impl PulseConfig {
    fn validate(&self) -> Result<()> {
        if self.sensors == 0 || self.steps == 0 {
            return Err(Error::Config("sensors and steps must be positive".into()));
        }
        if !(self.speed > 0.0 && self.width > 0.0) {
            return Err(Error::Config("speed and width must be positive".into()));
        }
        Ok(())
    }

    /// Field at any integer sensor index (taken modulo the ring) and step.
    pub fn value(&self, p: f64, sensor: i64, t: usize) -> f64 {
        let n = self.sensors as f64;
        let centre = self.origin + self.speed * p * t as f64;
        let sensor = sensor.rem_euclid(self.sensors as i64) as f64;
        let d = (sensor - centre).rem_euclid(n);
        let d = d.min(n - d);
        (-0.5 * (d / self.width).powi(2)).exp()
    }
}

/// One trajectory per parameter value. The list is three training values,
/// then one strictly inside their range, then one strictly outside.
pub fn gen_pulse_family(cfg: &PulseConfig, params: &[f64]) -> Result<Vec<TimeSeriesMatrix>> {
    cfg.validate()?;
    check_family_params(params)?;
    Ok(params
        .iter()
        .map(|&p| {
            TimeSeriesMatrix::from_fn(cfg.steps, cfg.sensors, |t, i| cfg.value(p, i as i64, t))
        })
        .collect())
}

/// Enforces the `[train, train, train, interpolation, extrapolation]`
/// ordering.
pub fn check_family_params(params: &[f64]) -> Result<()> {
    if params.len() < 5 {
        return Err(Error::Config(format!(
            "a parametric family needs at least 5 values, got {}",
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::Config("parameter values must be positive".into()));
    }
    let lo = params[..3].iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = params[..3].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(params[3] > lo && params[3] < hi) {
        return Err(Error::Config(format!(
            "interpolation value {} must lie strictly inside ({lo}, {hi})",
            params[3]
        )));
    }
    if params[4] >= lo && params[4] <= hi {
        return Err(Error::Config(format!(
            "extrapolation value {} must lie outside [{lo}, {hi}]",
            params[4]
        )));
    }
    Ok(())
}

/// Shipped desk-scale datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    SwellSmall,
    PulseSmall,
    LinearSmall,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swell-small" => Ok(Preset::SwellSmall),
            "pulse-small" => Ok(Preset::PulseSmall),
            "linear-small" => Ok(Preset::LinearSmall),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected swell-small, pulse-small or linear-small)"
            ))),
        }
    }
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::SwellSmall, Preset::PulseSmall, Preset::LinearSmall];

    pub fn name(self) -> &'static str {
        match self {
            Preset::SwellSmall => "swell-small",
            Preset::PulseSmall => "pulse-small",
            Preset::LinearSmall => "linear-small",
        }
    }

    /// Dataset config and source trajectories.
    pub fn source(self, seed: u64) -> Result<(DatasetConfig, SplitSource)> {
        let cfg = DatasetConfig::desk(self.name(), seed);
        let (main_len, param_len) = cfg.required_lengths();
        let n = cfg.n;
        let norm = |m: TimeSeriesMatrix| -> Result<TimeSeriesMatrix> {
            let dt = m.dt();
            Ok(normalize(&m)?.0.with_dt(dt))
        };
        let (main, params, trajectories) = match self {
            Preset::SwellSmall => {
                let base = swell_preset(n, main_len, seed);
                let main = gen_swell(&base)?;
                let params = vec![10.0, 20.0, 40.0, 30.0, 80.0];
                check_family_params(&params)?;
                let trajectories = params
                    .iter()
                    .map(|&h| {
                        gen_swell(&SwellConfig {
                            depth: h,
                            steps: param_len,
                            ..base.clone()
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (main, params, trajectories)
            }
            Preset::PulseSmall => {
                let pulse = PulseConfig {
                    sensors: n,
                    speed: 0.5,
                    width: 4.0,
                    steps: main_len,
                    origin: ChaCha8Rng::seed_from_u64(derive_seed(seed, "pulse")).random_range(0.0..n as f64),
                };
                let main = norm(gen_pulse_family(&pulse, &[1.0, 0.8, 1.4, 1.2, 1.8])?.remove(0))?;
                let params = vec![0.8, 1.0, 1.4, 1.2, 1.8];
                let trajectories = gen_pulse_family(&PulseConfig { steps: param_len, ..pulse }, &params)?
                    .into_iter()
                    .map(norm)
                    .collect::<Result<Vec<_>>>()?;
                (main, params, trajectories)
            }
            Preset::LinearSmall => {
                let angles = [0.07, 0.19, 0.31];
                let system = |scale: f64, steps: usize| -> Result<TimeSeriesMatrix> {
                    let spectrum = angles
                        .iter()
                        .flat_map(|a| {
                            let w = a * scale;
                            [(w.cos(), w.sin()), (w.cos(), -w.sin())]
                        })
                        .collect();
                    let (traj, _) = gen_linear_system(&LinearSystemConfig {
                        dimension: n,
                        spectrum,
                        steps,
                        seed: derive_seed(seed, "linear"),
                    })?;
                    norm(traj)
                };
                let main = system(1.0, main_len)?;
                let params = vec![0.8, 1.0, 1.3, 1.1, 1.6];
                let trajectories = params
                    .iter()
                    .map(|&p| system(p, param_len))
                    .collect::<Result<Vec<_>>>()?;
                (main, params, trajectories)
            }
        };
        Ok((
            cfg,
            SplitSource {
                main,
                family: Some(ParametricFamily { trajectories, params }),
            },
        ))
    }

    /// Complete referee bundle.
    pub fn bundle(self, seed: u64) -> Result<Bundle> {
        let (cfg, source) = self.source(seed)?;
        make_splits(&source, &cfg)
    }
}

/// Swell whose wavenumbers are whole multiples of the array's fundamental,
/// so each row spans an integer number of wavelengths of every mode.
fn swell_preset(channels: usize, steps: usize, seed: u64) -> SwellConfig {
    let spacing = 10.0;
    let k0 = 2.0 * PI / (channels as f64 * spacing);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "swell"));
    let modes = [3usize, 5, 8, 13, 21, 34]
        .iter()
        .map(|&m| SwellMode {
            k: m as f64 * k0,
            amplitude: rng.random_range(0.5..1.5),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    SwellConfig {
        channels,
        channel_spacing: spacing,
        dt: 1.0,
        steps,
        depth: 30.0,
        gravity: GRAVITY,
        modes,
    }
}
