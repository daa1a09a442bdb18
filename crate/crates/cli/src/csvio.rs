//! CSV tables: one sample per row, `.` decimals, optional header.
//!
//! Floats are written in Rust's shortest round-trip form, so a written
//! matrix reads back bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gradlearn_core::Dataset;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label: LabelColumn,
    /// Require labels in `{-1, +1}`.
    pub binary_labels: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: false,
            label: LabelColumn::Last,
            binary_labels: false,
        }
    }
}

fn reader(path: &Path, has_header: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Rectangular numeric table; row and column numbers in errors are 1-based
/// and count data rows only.
pub fn read_table(path: &Path, has_header: bool) -> Result<(usize, Vec<f64>)> {
    let mut rdr = reader(path, has_header)?;
    let mut width = None;
    let mut values = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::format(path, e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(CliError::format(
                    path,
                    format!("row {}: expected {w} fields, found {}", r + 1, rec.len()),
                ))
            }
            _ => {}
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::format(path, format!("row {}, column {}: not a number: {cell:?}", r + 1, c + 1))
            })?;
            values.push(v);
        }
    }
    Ok((width.unwrap_or(0), values))
}

pub fn read_matrix(path: &Path, has_header: bool) -> Result<DMatrix<f64>> {
    let (width, values) = read_table(path, has_header)?;
    let rows = if width == 0 { 0 } else { values.len() / width };
    Ok(DMatrix::from_row_slice(rows, width, &values))
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let table = read_matrix(path, opts.has_header)?;
    let (n, cols) = table.shape();
    if n == 0 {
        return Err(CliError::format(path, "no data rows"));
    }
    let label = match opts.label {
        LabelColumn::Index(i) if i < cols => i,
        LabelColumn::Last if cols > 0 => cols - 1,
        _ => {
            return Err(CliError::format(
                path,
                format!("label column {:?} missing from a {cols}-column table", opts.label),
            ))
        }
    };
    if cols < 2 {
        return Err(CliError::format(path, "need at least one feature column besides the label"));
    }
    let y = DVector::from_iterator(n, table.column(label).iter().copied());
    let x = table.remove_column(label);
    let data = Dataset::new(x, y)?;
    if opts.binary_labels {
        data.check_binary_labels().map_err(|e| CliError::format(path, e.to_string()))?;
    }
    Ok(data)
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    let mut inner = w
        .into_inner()
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e.to_string()))
}

/// Writes `m` row by row, with `header` as the first line when given. A
/// matrix with no columns produces an empty file.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    if m.ncols() == 0 {
        File::create(path).map_err(|e| CliError::io(path, e))?;
        return Ok(());
    }
    let mut w = writer(path)?;
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_err(path, e))?;
    }
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Features then label, under a `prefix1,..,prefixp,y` header.
pub fn write_dataset(path: &Path, x: &DMatrix<f64>, y: &DVector<f64>, prefix: &str) -> Result<()> {
    let mut header: Vec<String> = (1..=x.ncols()).map(|k| format!("{prefix}{k}")).collect();
    header.push("y".into());
    let mut table = x.clone().insert_column(x.ncols(), 0.0);
    table.set_column(x.ncols(), y);
    write_matrix(path, &table, Some(&header))
}

pub fn write_column(path: &Path, values: &[f64]) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(values.len(), 1, values), None)
}
