use crate::error::{Error, Result};
use crate::matrix::TimeSeriesMatrix;

/// All-zero prediction.
pub fn predict_zeros(shape: (usize, usize)) -> TimeSeriesMatrix {
    TimeSeriesMatrix::zeros(shape.0, shape.1)
}

/// Per-channel mean of `train`, repeated `horizon` times.
pub fn predict_average(train: &TimeSeriesMatrix, horizon: usize) -> Result<TimeSeriesMatrix> {
    if train.rows() == 0 {
        return Err(Error::Shape("empty training matrix".into()));
    }
    Ok(repeat_row(&train.column_means(), horizon).with_dt(train.dt()))
}

pub(crate) fn repeat_row(row: &[f64], times: usize) -> TimeSeriesMatrix {
    let n = row.len();
    TimeSeriesMatrix::from_fn(times, n, |_, j| row[j])
}
