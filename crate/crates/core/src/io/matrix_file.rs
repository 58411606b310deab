// SPDX-License-Identifier: MIT OR Apache-2.0

//! `ATM1` dense matrix container with a CSV fallback.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `ATM1`                            |
//! | 4      | 4    | `n_q` (u32)                             |
//! | 8      | 4    | `n_k` (u32)                             |
//! | 12     | 1    | dtype: 1 = f64, 2 = f32                 |
//! | 13     | ...  | `n_q * n_k` values, row-major           |

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ATM1";
pub const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F64 = 1,
    F32 = 2,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F64),
            2 => Ok(Dtype::F32),
            other => Err(Error::UnknownDtype(other)),
        }
    }
}

pub fn encode_matrix(m: &DMatrix<f64>, dtype: Dtype) -> Result<Vec<u8>> {
    let (r, c) = m.shape();
    let too_big = |_| Error::InvalidArgument(format!("shape {r}x{c} exceeds u32"));
    let r32 = u32::try_from(r).map_err(too_big)?;
    let c32 = u32::try_from(c).map_err(too_big)?;
    let mut out = Vec::with_capacity(HEADER_LEN + r * c * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&r32.to_le_bytes());
    out.extend_from_slice(&c32.to_le_bytes());
    out.push(dtype as u8);
    for i in 0..r {
        for j in 0..c {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(i * c + j));
            }
            match dtype {
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let n_q = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let n_k = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let dtype = Dtype::from_code(bytes[12])?;
    let payload = &bytes[HEADER_LEN..];
    let expected = n_q
        .checked_mul(n_k)
        .and_then(|x| x.checked_mul(dtype.width()))
        .ok_or_else(|| Error::Parse("shape overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f64> = match dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect(),
    };
    if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(idx));
    }
    Ok(DMatrix::from_row_slice(n_q, n_k, &values))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(m, dtype)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an `ATM1` file, or a headerless numeric CSV grid when the extension is `.csv`.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return parse_csv_matrix(&text);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

pub fn parse_csv_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("not a number: `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = crate::transport::matrix_from_rows(&rows)?;
    if let Some(idx) = m.transpose().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(idx));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = encode_matrix(&m, Dtype::F64).unwrap();
        assert_eq!(&b[..4], b"ATM1");
        assert_eq!(&b[4..8], &[2, 0, 0, 0]);
        assert_eq!(&b[8..12], &[3, 0, 0, 0]);
        assert_eq!(b[12], 1);
        assert_eq!(b.len(), 13 + 48);
        // Row-major: second value is (0, 1) = 2.0.
        assert_eq!(&b[21..29], &2.0f64.to_le_bytes());
        assert_eq!(decode_matrix(&b).unwrap(), m);
    }

    #[test]
    fn f32_payload() {
        let m = DMatrix::from_row_slice(1, 2, &[0.5, 0.25]);
        let b = encode_matrix(&m, Dtype::F32).unwrap();
        assert_eq!(b.len(), 13 + 8);
        assert_eq!(b[12], 2);
        assert_eq!(decode_matrix(&b).unwrap(), m);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(decode_matrix(b"ATM2\0\0\0\0"), Err(Error::BadMagic)));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let mut b = encode_matrix(&m, Dtype::F64).unwrap();
        b.pop();
        assert!(matches!(decode_matrix(&b), Err(Error::TruncatedPayload { .. })));
        let mut b = encode_matrix(&m, Dtype::F64).unwrap();
        b[12] = 9;
        assert!(matches!(decode_matrix(&b), Err(Error::UnknownDtype(9))));
        let mut b = encode_matrix(&m, Dtype::F64).unwrap();
        b[13..21].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_matrix(&b), Err(Error::NonFiniteValue(0))));
        let bad = DMatrix::from_row_slice(1, 1, &[f64::INFINITY]);
        assert!(matches!(encode_matrix(&bad, Dtype::F64), Err(Error::NonFiniteValue(0))));
    }

    #[test]
    fn csv_grid() {
        let m = parse_csv_matrix("1, 0\n0.5,0.5\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]));
        assert!(parse_csv_matrix("1,x\n").is_err());
        assert!(parse_csv_matrix("1,2\n3\n").is_err());
    }
}
