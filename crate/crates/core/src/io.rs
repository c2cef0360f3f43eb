//! Matrix files: CSV (one line per row) and the little-endian binary `SMRB` format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

const MAGIC: &[u8; 4] = b"SMRB";
const VERSION: u32 = 1;

/// Scientific notation with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn write_csv<W: Write>(m: &DenseMatrix<f64>, mut w: W) -> Result<()> {
    let mut line = String::new();
    for i in 0..m.rows() {
        line.clear();
        for j in 0..m.cols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_f64(m[(i, j)]));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<DenseMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("line {}: '{}': {e}", lineno + 1, tok.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} values, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DenseMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn write_binary<W: Write>(m: &DenseMatrix<f64>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for x in m.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<DenseMatrix<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("missing SMRB magic bytes".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported SMRB version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let cols = u64::from_le_bytes(b8) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Parse("SMRB dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes after SMRB payload", rest.len())));
    }
    DenseMatrix::from_col_major(rows, cols, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// `.bin`/`.smrb` select the binary format, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("smrb") => Self::Binary,
            _ => Self::Csv,
        }
    }
}

pub fn save_matrix(m: &DenseMatrix<f64>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => write_csv(m, &mut w)?,
        MatrixFormat::Binary => write_binary(m, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix<f64>> {
    let f = File::open(path)?;
    match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => read_csv(f),
        MatrixFormat::Binary => read_binary(BufReader::new(f)),
    }
}
