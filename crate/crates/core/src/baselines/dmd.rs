//! Exact dynamic mode decomposition and its time-delay (higher-order)
//! variant.
//!
//! Snapshots are the rows of a [`TimeSeriesMatrix`]. With `delay = d` each
//! snapshot is replaced by the stacked window `[x_t; x_{t+1}; ...; x_{t+d}]`
//! before the best-fit linear operator is computed, so `d = 0` is exact DMD.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use super::linalg::{eig, lstsq, thin_svd, to_complex};
use crate::error::{Error, Result};
use crate::matrix::TimeSeriesMatrix;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmdConfig {
    pub rank: usize,
    #[serde(default)]
    pub delay: usize,
}

impl Default for DmdConfig {
    fn default() -> Self {
        Self { rank: 10, delay: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct DmdModel {
    eigenvalues: Vec<c64>,
    /// `(channels * (delay + 1)) x rank`.
    modes: Mat<c64>,
    amplitudes: Vec<c64>,
    channels: usize,
    delay: usize,
    /// Exponent of the last embedded snapshot of the reference trajectory.
    last_index: usize,
    reference_rows: usize,
    dt: Option<f64>,
}

/// Stacks `delay + 1` consecutive rows into each column:
/// `Z[(b * n + c, t)] = x[t + b][c]`.
pub fn embed(traj: &TimeSeriesMatrix, delay: usize) -> Result<Mat<f64>> {
    let (rows, n) = traj.shape();
    if rows <= delay {
        return Err(Error::Shape(format!(
            "{rows} rows cannot be embedded with delay {delay}"
        )));
    }
    let cols = rows - delay;
    Ok(Mat::from_fn(n * (delay + 1), cols, |i, t| {
        traj.get(t + i / n, i % n)
    }))
}

/// Fits a DMD model to one trajectory.
pub fn dmd_fit(train: &TimeSeriesMatrix, cfg: &DmdConfig) -> Result<DmdModel> {
    dmd_fit_multi(&[train], cfg)
}

/// Fits one operator to the snapshot pairs of several trajectories. The
/// amplitudes refer to the last trajectory.
pub fn dmd_fit_multi(trajectories: &[&TimeSeriesMatrix], cfg: &DmdConfig) -> Result<DmdModel> {
    let last = *trajectories
        .last()
        .ok_or_else(|| Error::Shape("no training trajectories".into()))?;
    let n = last.cols();
    let d = cfg.delay;
    if cfg.rank == 0 {
        return Err(Error::Config("rank must be at least 1".into()));
    }
    let mut embedded = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        if t.cols() != n {
            return Err(Error::Shape("trajectories differ in width".into()));
        }
        if t.rows() < d + 2 {
            return Err(Error::Shape(format!(
                "{} rows give fewer than two snapshots at delay {d}",
                t.rows()
            )));
        }
        embedded.push(embed(t, d)?);
    }
    let dim = n * (d + 1);
    let pairs: usize = embedded.iter().map(|z| z.ncols() - 1).sum();
    if cfg.rank > dim.min(pairs) {
        return Err(Error::Config(format!(
            "rank {} exceeds min(embedded dimension {dim}, snapshot pairs {pairs})",
            cfg.rank
        )));
    }

    let mut x = Mat::<f64>::zeros(dim, pairs);
    let mut y = Mat::<f64>::zeros(dim, pairs);
    let mut col = 0;
    for z in &embedded {
        for t in 0..z.ncols() - 1 {
            for i in 0..dim {
                x[(i, col)] = z[(i, t)];
                y[(i, col)] = z[(i, t + 1)];
            }
            col += 1;
        }
    }

    let svd = thin_svd(&x)?;
    let sigma_max = svd.s.first().copied().unwrap_or(0.0);
    if !(sigma_max > 0.0) {
        return Err(Error::Degenerate("snapshot matrix is zero".into()));
    }
    let numerical = svd
        .s
        .iter()
        .take_while(|&&s| s > RANK_TOLERANCE * sigma_max)
        .count();
    if cfg.rank > numerical {
        return Err(Error::Degenerate(format!(
            "rank {} exceeds the numerical rank {numerical} of the snapshots",
            cfg.rank
        )));
    }
    let r = cfg.rank;

    // B = Y V_r S_r^{-1};  A~ = U_r^T B;  Phi = B W.
    let v_r = svd.v.subcols(0, r);
    let yv = &y * v_r;
    let b_mat = Mat::from_fn(dim, r, |i, j| yv[(i, j)] / svd.s[j]);
    let a_tilde = svd.u.subcols(0, r).transpose() * &b_mat;
    let (eigenvalues, w) = eig(&a_tilde)?;
    let modes = to_complex(&b_mat) * &w;

    let mut model = DmdModel {
        eigenvalues,
        modes,
        amplitudes: Vec::new(),
        channels: n,
        delay: d,
        last_index: 0,
        reference_rows: 0,
        dt: last.dt(),
    };
    model.set_reference(last)?;
    Ok(model)
}

impl DmdModel {
    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &Mat<c64> {
        &self.modes
    }

    pub fn amplitudes(&self) -> &[c64] {
        &self.amplitudes
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    /// Fits the amplitudes to the first embedded snapshot of `traj` and
    /// positions the forecast origin right after its last row.
    fn set_reference(&mut self, traj: &TimeSeriesMatrix) -> Result<()> {
        if traj.cols() != self.channels {
            return Err(Error::Shape(format!(
                "expected {} channels, got {}",
                self.channels,
                traj.cols()
            )));
        }
        if traj.rows() <= self.delay {
            return Err(Error::Shape(format!(
                "{} rows are too few for delay {}",
                traj.rows(),
                self.delay
            )));
        }
        let dim = self.channels * (self.delay + 1);
        let z0 = Mat::from_fn(dim, 1, |i, _| {
            c64::new(traj.get(i / self.channels, i % self.channels), 0.0)
        });
        let b = lstsq(&self.modes, &z0);
        self.amplitudes = (0..self.rank()).map(|j| b[(j, 0)]).collect();
        self.last_index = traj.rows() - 1 - self.delay;
        self.reference_rows = traj.rows();
        Ok(())
    }

    /// Same operator, amplitudes re-fitted to a burn-in window; forecasts
    /// continue after the window's last row.
    pub fn warm_started(&self, burnin: &TimeSeriesMatrix) -> Result<DmdModel> {
        let mut model = self.clone();
        model.set_reference(burnin)?;
        Ok(model)
    }

    /// Real part of block `block` of `Phi diag(lambda^t) b`, written to `out`.
    fn state_block(&self, coeffs: &[c64], block: usize, out: &mut [f64]) {
        let n = self.channels;
        for (c, o) in out.iter_mut().enumerate() {
            let row = block * n + c;
            *o = coeffs
                .iter()
                .enumerate()
                .map(|(j, cj)| (self.modes[(row, j)] * cj).re)
                .sum();
        }
    }

    /// `steps` rows following the reference trajectory, de-embedded to the
    /// original channels.
    pub fn forecast(&self, steps: usize) -> TimeSeriesMatrix {
        let n = self.channels;
        let mut values = vec![0.0; steps * n];
        let mut coeffs: Vec<c64> = self
            .eigenvalues
            .iter()
            .zip(&self.amplitudes)
            .map(|(l, b)| l.powu(self.last_index as u32) * b)
            .collect();
        for row in values.chunks_exact_mut(n.max(1)) {
            for (c, l) in coeffs.iter_mut().zip(&self.eigenvalues) {
                *c *= l;
            }
            self.state_block(&coeffs, self.delay, row);
        }
        TimeSeriesMatrix::from_raw(steps, n, values).with_dt(self.dt)
    }

    /// Model trajectory over the rows of the reference window.
    pub fn reconstruct(&self) -> TimeSeriesMatrix {
        let n = self.channels;
        let rows = self.reference_rows;
        let mut values = vec![0.0; rows * n];
        let mut coeffs = self.amplitudes.clone();
        let mut t = 0;
        for (j, row) in values.chunks_exact_mut(n.max(1)).enumerate() {
            let target = j.min(self.last_index);
            while t < target {
                for (c, l) in coeffs.iter_mut().zip(&self.eigenvalues) {
                    *c *= l;
                }
                t += 1;
            }
            self.state_block(&coeffs, j - t, row);
        }
        TimeSeriesMatrix::from_raw(rows, n, values).with_dt(self.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(theta: f64, steps: usize) -> TimeSeriesMatrix {
        let mut x = [1.0, 0.3];
        TimeSeriesMatrix::from_fn(steps, 2, |_, j| {
            let v = x[j];
            if j == 1 {
                x = [
                    theta.cos() * x[0] - theta.sin() * x[1],
                    theta.sin() * x[0] + theta.cos() * x[1],
                ];
            }
            v
        })
    }

    fn sorted(mut v: Vec<c64>) -> Vec<c64> {
        v.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        v
    }

    #[test]
    fn rotation_eigenvalues() {
        let theta = 0.1;
        let model = dmd_fit(&rotation(theta, 50), &DmdConfig { rank: 2, delay: 0 }).unwrap();
        let ev = sorted(model.eigenvalues().to_vec());
        let expected = [c64::new(theta.cos(), -theta.sin()), c64::new(theta.cos(), theta.sin())];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn rotation_forecast_matches_matrix_power() {
        let theta = 0.1;
        let all = rotation(theta, 150);
        let train = all.slice_rows(0, 50).unwrap();
        let model = dmd_fit(&train, &DmdConfig { rank: 2, delay: 0 }).unwrap();
        let fc = model.forecast(100);
        let truth = all.slice_rows(50, 150).unwrap();
        let err = fc.values().iter().zip(truth.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / truth.frobenius_norm() < 1e-8, "relative error {}", err / truth.frobenius_norm());
    }

    #[test]
    fn scalar_decay() {
        let train = TimeSeriesMatrix::from_fn(30, 1, |i, _| 2.0 * 0.9f64.powi(i as i32));
        let model = dmd_fit(&train, &DmdConfig { rank: 1, delay: 0 }).unwrap();
        assert_eq!(model.rank(), 1);
        assert!((model.eigenvalues()[0] - c64::new(0.9, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn delay_embedding_recovers_frequency() {
        let omega = 0.37;
        let train = TimeSeriesMatrix::from_fn(120, 1, |i, _| (omega * i as f64).cos());
        let model = dmd_fit(&train, &DmdConfig { rank: 2, delay: 10 }).unwrap();
        for l in model.eigenvalues() {
            assert!((l.norm() - 1.0).abs() < 1e-6);
            assert!((l.arg().abs() - omega).abs() < 1e-6, "arg {}", l.arg());
        }
        let fc = model.forecast(40);
        for s in 0..40 {
            let t = (120 + s) as f64;
            assert!((fc.get(s, 0) - (omega * t).cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_delay_embedding_is_identity() {
        let m = rotation(0.2, 10);
        let z = embed(&m, 0).unwrap();
        for t in 0..10 {
            for c in 0..2 {
                assert_eq!(z[(c, t)], m.get(t, c));
            }
        }
        let z2 = embed(&m, 2).unwrap();
        assert_eq!((z2.nrows(), z2.ncols()), (6, 8));
        assert_eq!(z2[(5, 7)], m.get(9, 1));
    }

    #[test]
    fn contractive_forecast_norm_does_not_grow() {
        let train = TimeSeriesMatrix::from_fn(40, 2, |i, j| {
            let t = i as f64;
            0.95f64.powf(t) * if j == 0 { (0.4 * t).cos() } else { (0.4 * t).sin() }
        });
        let model = dmd_fit(&train, &DmdConfig { rank: 2, delay: 0 }).unwrap();
        assert!(model.eigenvalues().iter().all(|l| l.norm() < 1.0));
        let fc = model.forecast(60);
        let norms: Vec<f64> = fc.row_iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert_eq!(model.forecast(0).rows(), 0);
    }

    #[test]
    fn low_rank_reconstruction_is_exact() {
        let train = TimeSeriesMatrix::from_fn(60, 5, |i, j| {
            let t = i as f64;
            (0.3 * t + j as f64).cos() * 0.99f64.powf(t) + 0.5 * (j as f64 - 2.0) * 0.97f64.powf(t)
        });
        for delay in [0, 3] {
            let model = dmd_fit(&train, &DmdConfig { rank: 3, delay }).unwrap();
            let rec = model.reconstruct();
            assert_eq!(rec.shape(), train.shape());
            let err = rec.values().iter().zip(train.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err / train.frobenius_norm() < 1e-8, "delay {delay}: {err}");
        }
    }

    #[test]
    fn warm_start_continues_after_burnin() {
        let theta = 0.25;
        let all = rotation(theta, 120);
        let model = dmd_fit(&all.slice_rows(0, 40).unwrap(), &DmdConfig { rank: 2, delay: 1 }).unwrap();
        let warm = model.warm_started(&all.slice_rows(70, 90).unwrap()).unwrap();
        let fc = warm.forecast(30);
        let truth = all.slice_rows(90, 120).unwrap();
        for (a, b) in fc.values().iter().zip(truth.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let m = rotation(0.1, 5);
        assert!(dmd_fit(&m, &DmdConfig { rank: 0, delay: 0 }).is_err());
        assert!(dmd_fit(&m, &DmdConfig { rank: 3, delay: 0 }).is_err());
        assert!(dmd_fit(&m, &DmdConfig { rank: 1, delay: 4 }).is_err());
        let scalar = TimeSeriesMatrix::from_fn(20, 3, |i, j| 0.9f64.powi(i as i32) * (j + 1) as f64);
        assert!(matches!(
            dmd_fit(&scalar, &DmdConfig { rank: 2, delay: 0 }),
            Err(Error::Degenerate(_))
        ));
    }
}
