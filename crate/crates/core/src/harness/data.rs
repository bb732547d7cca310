//! Tabular input: CSV ingestion and per-column standardization.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::DataMatrix;

/// Reads a comma-separated file with one header row of unique names and a
/// purely numeric body. Error positions are 1-based; `row` counts data rows
/// (the header is row 0).
pub fn load_csv(path: impl AsRef<Path>) -> Result<(DataMatrix, Vec<String>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn read_csv(input: impl std::io::Read) -> Result<(DataMatrix, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let names: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    for name in &names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateHeader(name.clone()));
        }
    }
    let p = names.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() > p {
            return Err(Error::Parse {
                row,
                col: p + 1,
                value: record[p].to_string(),
            });
        }
        for col in 0..p {
            let cell = record.get(col).map(str::trim).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::MissingValue { row, col: col + 1 });
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        row,
                        col: col + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
        n += 1;
    }
    let x = DataMatrix::new(DMatrix::from_row_slice(n, p, &values))?;
    Ok((x, names))
}

/// Centres every column and scales it to unit sample variance
/// (denominator `n - 1`).
pub fn standardize(x: &DataMatrix) -> Result<DataMatrix> {
    let n = x.n();
    let mut out = x.values().clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let var = col.norm_squared() / (n - 1) as f64;
        let sd = var.sqrt();
        let scale = mean.abs().max(col.amax());
        if !(sd > 1e-12 * scale) || sd == 0.0 {
            return Err(Error::ConstantColumn(j));
        }
        col /= sd;
    }
    DataMatrix::new(out)
}
