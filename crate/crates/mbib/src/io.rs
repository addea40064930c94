//! Dataset CSV files, DAG text files and JSON output.
//!
//! A dataset CSV has a header row of node names followed by one sample per
//! row of decimal floats. Values are written with the shortest
//! representation that parses back to the same `f64`, so files round-trip
//! exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use mbib_core::{Dag, Dataset, Matrix};
use serde::Serialize;

use crate::error::{CliError, Result};

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset(file).map_err(|message| CliError::data(path, message))
}

/// Parses a dataset from any reader; errors are plain messages without the
/// file name.
pub fn parse_dataset<R: Read>(reader: R) -> std::result::Result<Dataset, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let columns: Vec<String> =
        rdr.headers().map_err(|e| format!("unreadable header: {e}"))?.iter().map(str::to_owned).collect();
    if columns.is_empty() || columns.iter().any(String::is_empty) {
        return Err("header must name every column".into());
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| format!("line {line}: {e}"))?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("line {line}, column `{}`: `{field}` is not a number", columns[j]))?;
            if !v.is_finite() {
                return Err(format!("line {line}, column `{}`: non-finite value", columns[j]));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err("no data rows".into());
    }
    let values = Matrix::from_vec(rows, columns.len(), data).map_err(|e| e.to_string())?;
    Dataset::new(columns, values).map_err(|e| e.to_string())
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    format_dataset(&mut buf, data).map_err(|e| CliError::io(path, e))?;
    write_bytes(path, &buf)
}

pub fn format_dataset<W: Write>(out: W, data: &Dataset) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(data.columns())?;
    for i in 0..data.n_rows() {
        wtr.write_record(data.row(i).iter().map(|v| v.to_string()))?;
    }
    wtr.flush()
}

/// Two-column `truth,predicted` file for scatter plots.
pub fn write_scatter(path: &Path, truth: &[f64], predicted: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let rows = std::iter::once(["truth".to_owned(), "predicted".to_owned()])
        .chain(truth.iter().zip(predicted).map(|(t, p)| [t.to_string(), p.to_string()]));
    for row in rows {
        wtr.write_record(&row).map_err(|e| CliError::data(path, e.to_string()))?;
    }
    let buf = wtr.into_inner().map_err(|e| CliError::data(path, e.to_string()))?;
    write_bytes(path, &buf)
}

pub fn read_dag(path: &Path) -> Result<Dag> {
    let text = read_text(path)?;
    Dag::parse_text(&text).map_err(|e| CliError::data(path, e.to_string()))
}

pub fn write_dag(path: &Path, dag: &Dag) -> Result<()> {
    write_bytes(path, dag.to_text().as_bytes())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.into(), source })
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types always serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_json_string(value).as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
