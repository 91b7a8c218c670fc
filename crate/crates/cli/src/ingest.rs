// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV input: comma separated, dot decimal, rows are time points. A single
//! header row is detected when the first record holds a non-numeric cell.

use std::path::Path;

use sncp::SampleMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("input contains no data rows")]
    Empty,
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: {cell:?} is not a number")]
    NonNumeric {
        line: u64,
        column: usize,
        cell: String,
    },
    #[error("line {line}, column {column}: non-finite value {cell:?}")]
    NonFinite {
        line: u64,
        column: usize,
        cell: String,
    },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<SampleMatrix<f64>, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<SampleMatrix<f64>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut width = None;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if first {
            first = false;
            if record.iter().any(|c| c.parse::<f64>().is_err()) {
                width = Some(record.len());
                continue;
            }
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(IngestError::Ragged {
                line,
                expected,
                found: record.len(),
            });
        }
        for (idx, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| IngestError::NonNumeric {
                line,
                column: idx + 1,
                cell: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::NonFinite {
                    line,
                    column: idx + 1,
                    cell: cell.to_string(),
                });
            }
            data.push(v);
        }
    }
    let p = width.unwrap_or(0);
    if data.is_empty() || p == 0 {
        return Err(IngestError::Empty);
    }
    let n = data.len() / p;
    Ok(SampleMatrix::from_row_major(n, p, data).expect("finite rectangular data"))
}
