//! Comma-separated matrices and vectors, one observation per row.
//!
//! Files have no header by default. Values are written with the shortest
//! representation that round-trips, so re-reading is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn reader(path: &Path, header: bool) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?)
}

fn parse(field: &str, row: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::InvalidData(format!("row {}: cannot parse {field:?} as a number", row + 1))
    })
}

/// Reads a dense matrix; every row must have the same number of fields.
pub fn read_matrix(path: &Path, header: bool) -> Result<Matrix<f64>> {
    let mut rdr = reader(path, header)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if cols.is_none() {
            cols = Some(rec.len());
        }
        for f in rec.iter() {
            values.push(parse(f, i)?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::InvalidData(format!("{} is empty", path.display())))?;
    Matrix::from_row_major(rows, cols, &values)
}

/// Reads a column vector (one value per row) or a single row of values.
pub fn read_vector(path: &Path, header: bool) -> Result<Vec<f64>> {
    let m = read_matrix(path, header)?;
    match (m.rows(), m.cols()) {
        (_, 1) => Ok(m.col(0).to_vec()),
        (1, _) => Ok(m.row(0)),
        (r, c) => Err(Error::InvalidData(format!(
            "expected a single column or row, got {r}x{c}"
        ))),
    }
}

pub fn write_matrix(path: &Path, m: &Matrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let vals = [0.1, -2.5e-17, 1.0 / 3.0, 7.0, f64::MIN_POSITIVE, -123456.789];
        let m = Matrix::from_row_major(3, 2, &vals).unwrap();
        let p = dir.path().join("m.csv");
        write_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p, false).unwrap(), m);
        let v = dir.path().join("v.csv");
        write_vector(&v, &vals).unwrap();
        assert_eq!(read_vector(&v, false).unwrap(), vals.to_vec());
    }

    #[test]
    fn header_is_skipped_when_requested() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        std::fs::write(&p, "a, b\n1, 2\n3, 4\n").unwrap();
        let m = read_matrix(&p, true).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.get(1, 0), 3.0);
        assert!(read_matrix(&p, false).is_err());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_matrix(&p, false).is_err());
        std::fs::write(&p, "").unwrap();
        assert!(read_matrix(&p, false).is_err());
    }
}
