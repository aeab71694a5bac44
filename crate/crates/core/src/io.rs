//! CTFW binary container and a CSV adapter.
//!
//! Layout (little-endian):
//!
//! | bytes  | content                       |
//! |--------|-------------------------------|
//! | 0..4   | magic `CTFW`                  |
//! | 4      | version, `1`                  |
//! | 5      | dtype code, `1` = f64         |
//! | 6..8   | reserved, zero                |
//! | 8..16  | rows, u64                     |
//! | 16..24 | cols, u64                     |
//! | 24..   | `rows * cols` f64, row-major  |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::TimeSeriesMatrix;

pub const MAGIC: [u8; 4] = *b"CTFW";
pub const VERSION: u8 = 1;
pub const DTYPE_F64: u8 = 1;
pub const HEADER_LEN: usize = 24;

pub fn encode_matrix(mat: &TimeSeriesMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + mat.values().len() * 8);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&[VERSION, DTYPE_F64, 0, 0]);
    buf.extend_from_slice(&(mat.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(mat.cols() as u64).to_le_bytes());
    for v in mat.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_matrix(bytes: &[u8]) -> Result<TimeSeriesMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_F64 {
        return Err(Error::Format(format!("unsupported dtype code {}", bytes[5])));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("shape [{rows},{cols}] overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    let actual = payload.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            actual - expected
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    TimeSeriesMatrix::new(rows as usize, cols as usize, values)
}

/// Writes `mat` in the CTFW layout.
pub fn write_matrix(mat: &TimeSeriesMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(Error::io_at(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_matrix(mat)).map_err(Error::io_at(path))?;
    w.flush().map_err(Error::io_at(path))?;
    Ok(())
}

/// Reads and validates a CTFW file.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<TimeSeriesMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(Error::io_at(path))?;
    decode_matrix(&bytes)
}

/// Header-free, comma-separated rows.
pub fn write_csv(mat: &TimeSeriesMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path.as_ref())?;
    for row in mat.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<TimeSeriesMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad csv value {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    TimeSeriesMatrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_three_layout() {
        let m = TimeSeriesMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let bytes = encode_matrix(&m);
        assert_eq!(bytes.len(), 24 + 48);
        assert_eq!(&bytes[..8], b"CTFW\x01\x01\x00\x00");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(decode_matrix(&bytes).unwrap(), m);
    }

    #[test]
    fn zero_payload_is_zero_bytes() {
        let bytes = encode_matrix(&TimeSeriesMatrix::zeros(1, 1));
        assert_eq!(&bytes[24..], &[0u8; 8]);
    }

    #[test]
    fn rejects_bad_magic_truncation_and_nan() {
        let m = TimeSeriesMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let mut bytes = encode_matrix(&m);
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_matrix(&bad), Err(Error::Format(_))));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_matrix(&v2), Err(Error::Format(_))));
        let mut f32code = bytes.clone();
        f32code[5] = 2;
        assert!(matches!(decode_matrix(&f32code), Err(Error::Format(_))));
        assert!(matches!(
            decode_matrix(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { expected: 16, actual: 15 })
        ));
        bytes[24..32].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(decode_matrix(&bytes), Err(Error::NonFinite(0))));
    }

    #[test]
    fn large_train_matrix_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("X1train.ctfw");
        let m = TimeSeriesMatrix::zeros(2000, 2048);
        write_matrix(&m, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len - HEADER_LEN as u64, 32_768_000);
        assert_eq!(read_matrix(&path).unwrap().shape(), (2000, 2048));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = TimeSeriesMatrix::from_rows(&[vec![0.1, -2.5e-300], vec![1.0 / 3.0, 7.0]]).unwrap();
        write_csv(&m, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn ctfw_round_trip_is_bitwise(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let m = TimeSeriesMatrix::from_fn(rows, cols, |i, j| {
                let bits = seed.wrapping_mul(6364136223846793005).wrapping_add((i * 31 + j) as u64);
                let v = f64::from_bits(bits >> 2);
                if v.is_finite() { v } else { 0.0 }
            });
            let back = decode_matrix(&encode_matrix(&m)).unwrap();
            let a: Vec<u64> = m.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
