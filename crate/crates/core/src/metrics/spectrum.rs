use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::matrix::TimeSeriesMatrix;

/// Floor applied to `|coef|^2` before the logarithm.
pub const POWER_FLOOR: f64 = 1e-30;

/// Log power over the central `2 * kmax + 1` wavenumber bins of the last
/// `k` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SpectralMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Spatial DFT of each of the last `k` rows, zero wavenumber centred at
/// column `n / 2`, window `n/2 - kmax ..= n/2 + kmax`, entries
/// `ln(max(|c|^2, POWER_FLOOR))`. An identically zero block maps to the
/// all-zero spectrum.
pub fn power_spectrum(mat: &TimeSeriesMatrix, k: usize, kmax: usize) -> Result<SpectralMatrix> {
    let n = mat.cols();
    if k == 0 || k > mat.rows() {
        return Err(Error::Shape(format!(
            "k = {k} outside 1..={} rows",
            mat.rows()
        )));
    }
    if n < 2 * kmax + 2 {
        return Err(Error::Shape(format!(
            "{n} columns are too few for kmax = {kmax} (need {})",
            2 * kmax + 2
        )));
    }
    let width = 2 * kmax + 1;
    let first = mat.rows() - k;
    let block = &mat.values()[first * n..];
    if block.iter().all(|&v| v == 0.0) {
        return Ok(SpectralMatrix {
            rows: k,
            cols: width,
            values: vec![0.0; k * width],
        });
    }

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = Vec::with_capacity(k * width);
    for row in block.chunks_exact(n) {
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for c in 0..width {
            let wavenumber = c as isize - kmax as isize;
            let idx = wavenumber.rem_euclid(n as isize) as usize;
            values.push(buf[idx].norm_sqr().max(POWER_FLOOR).ln());
        }
    }
    Ok(SpectralMatrix {
        rows: k,
        cols: width,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Direct O(n^2) DFT, independent of the FFT path.
    fn dft_power(row: &[f64], wavenumber: isize) -> f64 {
        let n = row.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (x, &v) in row.iter().enumerate() {
            let phase = -2.0 * PI * wavenumber as f64 * x as f64 / n;
            re += v * phase.cos();
            im += v * phase.sin();
        }
        re * re + im * im
    }

    #[test]
    fn window_has_201_bins() {
        let m = TimeSeriesMatrix::from_fn(3, 256, |i, j| ((i + 1) * j) as f64);
        let p = power_spectrum(&m, 2, 100).unwrap();
        assert_eq!((p.rows(), p.cols()), (2, 201));
    }

    #[test]
    fn zero_block_gives_zero_spectrum() {
        let p = power_spectrum(&TimeSeriesMatrix::zeros(4, 300), 4, 100).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_row_has_only_the_centre_bin() {
        let c = 1.5;
        let m = TimeSeriesMatrix::from_fn(1, 512, |_, _| c);
        let p = power_spectrum(&m, 1, 100).unwrap();
        let centre = ((512.0 * c) as f64).powi(2).ln();
        assert!((p.get(0, 100) - centre).abs() < 1e-12);
        let oracle_off: f64 = (1..=100).map(|w| dft_power(m.row(0), w)).fold(0.0, f64::max);
        assert!(oracle_off < 1e-18);
        for col in (0..201).filter(|&c| c != 100) {
            // Rounding residue of the transform stays many decades below
            // the centre bin; exact zeros hit the floor.
            assert!(p.get(0, col) < -40.0, "col {col}: {}", p.get(0, col));
        }
        let floor = POWER_FLOOR.ln();
        assert!(p.values().iter().all(|&v| v >= floor));
    }

    #[test]
    fn single_cosine_has_symmetric_peaks() {
        let n = 256;
        let m = TimeSeriesMatrix::from_fn(1, n, |_, x| (2.0 * PI * 5.0 * x as f64 / n as f64).cos());
        let p = power_spectrum(&m, 1, 100).unwrap();
        let expected = dft_power(m.row(0), 5).ln();
        assert!((expected - ((n as f64 / 2.0).powi(2)).ln()).abs() < 1e-9);
        assert!((p.get(0, 105) - expected).abs() < 1e-9);
        assert!((p.get(0, 95) - expected).abs() < 1e-9);
        let peak = p.values().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak, p.get(0, 105).max(p.get(0, 95)));
        for col in (0..201).filter(|c| ![95, 105].contains(c)) {
            assert!(p.get(0, col) < expected - 20.0);
        }
    }

    #[test]
    fn matches_direct_dft_on_random_rows() {
        let n = 210;
        let m = TimeSeriesMatrix::from_fn(5, n, |i, j| ((i * 7919 + j * 104729) % 1013) as f64 / 1013.0 - 0.5);
        let p = power_spectrum(&m, 3, 100).unwrap();
        for r in 0..3 {
            for c in 0..201 {
                let oracle = dft_power(m.row(2 + r), c as isize - 100).max(POWER_FLOOR).ln();
                assert!((p.get(r, c) - oracle).abs() < 1e-9, "({r},{c})");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = TimeSeriesMatrix::zeros(4, 201);
        assert!(power_spectrum(&m, 1, 100).is_err());
        let m = TimeSeriesMatrix::zeros(4, 202);
        assert!(power_spectrum(&m, 0, 100).is_err());
        assert!(power_spectrum(&m, 5, 100).is_err());
        assert!(power_spectrum(&m, 4, 100).is_ok());
    }
}
