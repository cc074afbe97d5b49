//! CSV readers and writers: headerless numeric matrices and long-format
//! panels with header `subject,time,value`.

use std::io::{Read, Write};

use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::mixed::{LongDataset, MixedError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: cannot parse {value:?} as a number")]
    Parse { line: usize, value: String },
    #[error("line {line}: expected {expected} fields, found {got}")]
    Ragged { line: usize, expected: usize, got: usize },
    #[error("empty matrix")]
    Empty,
    #[error(transparent)]
    Data(#[from] MixedError),
}

fn reader<R: Read>(r: R, headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(headers).trim(csv::Trim::All).comment(Some(b'#')).from_reader(r)
}

pub fn read_matrix<R: Read>(r: R) -> Result<DenseMatrix<f64>, IoError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in reader(r, false).records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| IoError::Parse { line, value: v.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(IoError::Ragged { line, expected: first.len(), got: row.len() });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(IoError::Empty);
    }
    Ok(DenseMatrix::from_rows(&rows).expect("rectangular rows"))
}

/// Writes integers without a decimal point and other values with full
/// round-trip precision.
pub fn write_matrix<W: Write>(w: W, m: &DenseMatrix<f64>) -> Result<(), IoError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.rows() {
        out.write_record(m.row(i).iter().map(|v| format_number(*v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn read_vector<R: Read>(r: R) -> Result<Vec<f64>, IoError> {
    let m = read_matrix(r)?;
    Ok(if m.cols() == 1 { m.column(0) } else { m.data().to_vec() })
}

pub fn read_long<R: Read>(r: R) -> Result<LongDataset, IoError> {
    let mut records = Vec::new();
    for (k, rec) in reader(r, true).records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(IoError::Ragged { line, expected: 3, got: rec.len() });
        }
        let time = rec[1].parse::<usize>().map_err(|_| IoError::Parse { line, value: rec[1].to_string() })?;
        let value = rec[2].parse::<f64>().map_err(|_| IoError::Parse { line, value: rec[2].to_string() })?;
        records.push((rec[0].to_string(), time, value));
    }
    Ok(LongDataset::from_records(&records)?)
}

pub fn write_long<W: Write>(w: W, data: &LongDataset) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["subject", "time", "value"])?;
    for (s, t, v) in data.records() {
        out.write_record([s, t.to_string(), format!("{v}")])?;
    }
    out.flush()?;
    Ok(())
}
