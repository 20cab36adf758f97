//! Raw IEEE-754 f32 little-endian row-major matrix payloads.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn encode_f32le(m: &DMatrix<f64>) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols * 4);
    for i in 0..rows {
        for j in 0..cols {
            out.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_f32le(bytes: &[u8], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::shape("f32 payload bytes", expected, bytes.len()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(
            "f32 payload",
            format!("non-finite value at flat index {idx}"),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, encode_f32le(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_f32le(&bytes, rows, cols).map_err(|e| match e {
        Error::Shape { expected, actual, .. } => Error::Shape {
            context: format!("payload {}", path.display()),
            expected,
            actual,
        },
        other => other,
    })
}
