//! Dataset ingestion: delimited text with a header row.
//!
//! Rows with missing values (empty cells, `NA`, `NaN`, `null`, case
//! insensitive) in any selected column are dropped and counted; cells that
//! are present but not finite numbers are hard errors naming the row and
//! column. The sample is returned as-is — the caller applies the cutoff
//! shift.

use crate::error::RdError;
use crate::sample::Sample;
use std::path::Path;

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || matches!(cell.to_ascii_lowercase().as_str(), "na" | "nan" | "null")
}

/// Read `x_column` and `z_columns` from a delimited file. Returns the
/// sample and the number of rows dropped for missing values. Data rows are
/// numbered from 1 (the header is row 0) in error messages.
pub fn parse_dataset(
    path: &Path,
    x_column: &str,
    z_columns: &[String],
    delimiter: u8,
) -> Result<(Sample, usize), RdError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RdError::MissingColumn(name.to_string()))
    };
    let x_idx = find(x_column)?;
    let z_idx: Vec<usize> = z_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_, _>>()?;

    let mut x = Vec::new();
    let mut z: Vec<Vec<f64>> = vec![Vec::new(); z_idx.len()];
    let mut dropped = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |idx: usize| record.get(idx).unwrap_or("");
        if is_missing(cell(x_idx)) || z_idx.iter().any(|&idx| is_missing(cell(idx))) {
            dropped += 1;
            continue;
        }
        let parse = |idx: usize, column: &str| -> Result<f64, RdError> {
            let raw = cell(idx);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(RdError::NonNumericCell {
                    row,
                    column: column.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        x.push(parse(x_idx, x_column)?);
        for (k, &idx) in z_idx.iter().enumerate() {
            z[k].push(parse(idx, &z_columns[k])?);
        }
    }
    if x.is_empty() {
        return Err(RdError::EmptyAfterFiltering);
    }
    Ok((Sample::new(x, z, z_columns.to_vec())?, dropped))
}
