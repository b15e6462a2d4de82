//! Delimited tables with a header row.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, EntryKind};

const NA_TOKENS: [&str; 6] = ["", "na", "nan", "null", "none", "."];

/// A parsed table: header plus string cells, all rows the same width.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn data_error(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {msg}", path.display()))
}

/// Reads a comma-separated table, or tab-separated when the extension is
/// `.tsv`. Ragged rows and missing cells are errors.
pub fn read_table(path: &Path) -> Result<Table> {
    let delimiter = if path.extension().is_some_and(|e| e == "tsv") { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_error(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| data_error(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                data_error(path, format!("row {r} has {len} fields, expected {expected_len}"))
            }
            _ => data_error(path, e),
        })?;
        let row: Vec<String> = record.iter().map(String::from).collect();
        if let Some(c) = row.iter().position(|v| NA_TOKENS.contains(&v.to_ascii_lowercase().as_str())) {
            return Err(data_error(
                path,
                format!("missing value at row {r}, column {c} (`{}`); missing data is not supported", header[c]),
            ));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read_f64_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let t = read_table(path)?;
    let mut m = DMatrix::zeros(t.rows.len(), t.header.len());
    for (r, row) in t.rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let x: f64 =
                v.parse().map_err(|_| data_error(path, format!("row {r}, column {c}: `{v}` is not a number")))?;
            if !x.is_finite() {
                return Err(data_error(path, format!("row {r}, column {c}: non-finite value")));
            }
            m[(r, c)] = x;
        }
    }
    Ok((t.header, m))
}

/// Reads an outcome table, checking every cell against its entry kind.
pub fn read_outcomes(path: &Path, entries: Option<&[EntryKind]>) -> Result<(Vec<String>, DMatrix<u32>)> {
    let t = read_table(path)?;
    let p = t.header.len();
    if let Some(e) = entries {
        if e.len() != p {
            return Err(Error::Config(format!("{} entry kinds given but {} has {p} columns", e.len(), path.display())));
        }
    }
    let mut y = DMatrix::zeros(t.rows.len(), p);
    for (r, row) in t.rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let kind = entries.map_or(EntryKind::Binary, |e| e[c]);
            let value = v.parse::<u32>().ok().filter(|&x| kind.in_support(x)).ok_or_else(|| Error::OutOfSupport {
                row: r,
                col: c,
                value: v.clone(),
                kind: kind.label(),
            })?;
            y[(r, c)] = value;
        }
    }
    Ok((t.header, y))
}

/// Locations of the three data tables; `X` and `T` may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub y: PathBuf,
    #[serde(default)]
    pub x: Option<PathBuf>,
    #[serde(default)]
    pub t: Option<PathBuf>,
}

/// Loads and validates `Y`, `X`, `T`. Absent `X`/`T` give zero-width matrices.
pub fn load_dataset(paths: &DatasetPaths, entries: Option<&[EntryKind]>) -> Result<Dataset> {
    let (_, y) = read_outcomes(&paths.y, entries)?;
    let x = match &paths.x {
        Some(p) => read_f64_matrix(p)?.1,
        None => DMatrix::zeros(y.nrows(), 0),
    };
    let t = match &paths.t {
        Some(p) => read_f64_matrix(p)?.1,
        None => DMatrix::zeros(y.ncols(), 0),
    };
    Dataset::new(y, x, t)
}

fn headers(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

pub fn write_matrix<T: std::fmt::Display + nalgebra::Scalar>(
    path: &Path,
    header: &[String],
    m: &DMatrix<T>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(header)?;
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows of already-formatted cells.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `Y.csv` and, when non-empty, `X.csv` and `T.csv` into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<DatasetPaths> {
    std::fs::create_dir_all(dir)?;
    let y = dir.join("Y.csv");
    write_matrix(&y, &headers("y", data.p()), &data.y)?;
    let x = (data.x.ncols() > 0).then(|| dir.join("X.csv"));
    if let Some(path) = &x {
        write_matrix(path, &headers("x", data.x.ncols()), &data.x)?;
    }
    let t = (data.t.ncols() > 0).then(|| dir.join("T.csv"));
    if let Some(path) = &t {
        write_matrix(path, &headers("t", data.t.ncols()), &data.t)?;
    }
    Ok(DatasetPaths { y, x, t })
}
