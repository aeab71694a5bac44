//! The `(timesteps x sensors)` data carrier plus per-event normalization and
//! noise injection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major field. Row index is time, column index is space.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    dt: Option<f64>,
}

impl TimeSeriesMatrix {
    /// Builds a matrix from row-major values, checking the shape and that
    /// every value is finite.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix must have at least one row and column, got [{rows},{cols}]"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} values for [{rows},{cols}], got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            rows,
            cols,
            values,
            dt: None,
        })
    }

    /// All-zero matrix. Zero rows are allowed here so that a zero-step
    /// forecast has a representation; such a matrix fails shape checks
    /// downstream.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            dt: None,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            values,
            dt: None,
        }
    }

    /// Internal constructor for values produced by trusted numeric code.
    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            values,
            dt: None,
        }
    }

    pub fn with_dt(mut self, dt: Option<f64>) -> Self {
        self.dt = dt;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols.max(1))
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return Err(Error::Shape(format!(
                "row range {start}..{end} outside [0,{}]",
                self.rows
            )));
        }
        Ok(Self {
            rows: end - start,
            cols: self.cols,
            values: self.values[start * self.cols..end * self.cols].to_vec(),
            dt: self.dt,
        })
    }

    /// Last `count` rows.
    pub fn tail_rows(&self, count: usize) -> Result<Self> {
        if count > self.rows {
            return Err(Error::Shape(format!(
                "cannot take {count} trailing rows of a {}-row matrix",
                self.rows
            )));
        }
        self.slice_rows(self.rows - count, self.rows)
    }

    /// Stacks matrices with equal column counts along the time axis.
    pub fn vstack(parts: &[&TimeSeriesMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("nothing to stack".into()))?;
        if parts.iter().any(|p| p.cols != first.cols) {
            return Err(Error::Shape("column counts differ".into()));
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let values = parts.iter().flat_map(|p| p.values.iter().copied()).collect();
        Ok(Self {
            rows,
            cols: first.cols,
            values,
            dt: first.dt,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
            dt: self.dt,
        }
    }

    /// Circular shift along the spatial axis: `out[i][j] = self[i][(j - shift) mod n]`.
    pub fn roll_cols(&self, shift: isize) -> Self {
        let n = self.cols as isize;
        Self::from_fn(self.rows, self.cols, |i, j| {
            let src = (j as isize - shift).rem_euclid(n) as usize;
            self.get(i, src)
        })
        .with_dt(self.dt)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation over every entry.
    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / self.values.len() as f64;
        var.sqrt()
    }

    /// Per-column mean.
    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums.iter().map(|s| s / self.rows as f64).collect()
    }
}

/// Scalar mean and standard deviation of one event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Inverse of [`normalize`].
    pub fn denormalize(&self, mat: &TimeSeriesMatrix) -> TimeSeriesMatrix {
        let NormStats { mean, std } = *self;
        mat.map(|v| v * std + mean)
    }
}

/// Scales the whole event to zero mean and unit population variance using a
/// single scalar pair, preserving relative channel amplitudes.
pub fn normalize(mat: &TimeSeriesMatrix) -> Result<(TimeSeriesMatrix, NormStats)> {
    let mean = mat.mean();
    let std = mat.std();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Degenerate(
            "cannot normalize a constant matrix".into(),
        ));
    }
    let out = mat.map(|v| (v - mean) / std);
    Ok((out, NormStats { mean, std }))
}

/// Additive Gaussian noise relative to the signal's standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_rel: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_rel: f64, seed: u64) -> Result<Self> {
        let spec = Self { sigma_rel, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_rel >= 0.0) || !self.sigma_rel.is_finite() {
            return Err(Error::Config(format!(
                "sigma_rel must be a finite nonnegative number, got {}",
                self.sigma_rel
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Returns `mat + g` where `g` is i.i.d. `N(0, (sigma_rel * std(mat))^2)`,
/// deterministic given the seed.
pub fn add_noise(mat: &TimeSeriesMatrix, spec: &NoiseSpec) -> TimeSeriesMatrix {
    if spec.sigma_rel == 0.0 {
        return mat.clone();
    }
    let scale = spec.sigma_rel * mat.std();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = mat
        .values
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + scale * z
        })
        .collect();
    TimeSeriesMatrix {
        rows: mat.rows,
        cols: mat.cols,
        values,
        dt: mat.dt,
    }
}
