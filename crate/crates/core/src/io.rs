//! CSV matrices with missing cells.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::masked::MaskedMatrix;

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_missing(cell: &str, token: Option<&str>) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("nan") || token.is_some_and(|t| cell == t)
}

/// Read a headerless numeric CSV. Empty cells, `NaN` (any case) and the
/// optional `missing_token` are unobserved.
pub fn read_masked_csv(path: &Path, missing_token: Option<&str>) -> Result<MaskedMatrix> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, format!("row {}: {e}", r + 1)))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            if is_missing(cell, missing_token) {
                row.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(path, format!("row {}, column {}: not a number: {cell:?}", r + 1, c + 1))
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    format!("row {}, column {}: non-finite value", r + 1, c + 1),
                ));
            }
            row.push(Some(v));
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    format!("row {} has {} columns, expected {}", r + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(parse_err(path, "empty matrix".into()));
    }
    let (m, n) = (rows.len(), rows[0].len());
    let values = DMatrix::from_fn(m, n, |i, j| rows[i][j].unwrap_or(0.0));
    let mask = DMatrix::from_fn(m, n, |i, j| rows[i][j].is_some());
    MaskedMatrix::new(values, mask).map_err(|e| parse_err(path, e.to_string()))
}

/// Write a matrix with unobserved cells left empty.
pub fn write_masked_csv(path: &Path, input: &MaskedMatrix) -> Result<()> {
    write_cells(path, input.nrows(), input.ncols(), |i, j| {
        input.get(i, j).map(|v| v.to_string()).unwrap_or_default()
    })
}

/// Write a dense matrix using shortest round-trip formatting.
pub fn write_completed_csv(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    write_cells(path, x.nrows(), x.ncols(), |i, j| x[(i, j)].to_string())
}

fn write_cells(
    path: &Path,
    rows: usize,
    cols: usize,
    cell: impl Fn(usize, usize) -> String,
) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::invalid("output path is empty"));
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut line = String::new();
    for i in 0..rows {
        line.clear();
        for j in 0..cols {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&cell(i, j));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
