use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `n × p` sample matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<String>,
    values: Matrix,
}

impl Dataset {
    pub fn new(columns: Vec<String>, values: Matrix) -> Result<Self> {
        if columns.len() != values.cols() {
            return Err(Error::InvalidDataset(alloc::format!(
                "{} names for {} columns",
                columns.len(),
                values.cols()
            )));
        }
        if values.rows() == 0 {
            return Err(Error::InvalidDataset("no rows".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(Error::InvalidDataset(alloc::format!("duplicate column `{c}`")));
            }
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / values.cols(), pos % values.cols());
            return Err(Error::NonFinite(alloc::format!("row {r}, column `{}`", columns[c])));
        }
        Ok(Dataset { columns, values })
    }

    /// Builds from column-major vectors.
    pub fn from_columns(columns: Vec<String>, data: &[Vec<f64>]) -> Result<Self> {
        let n = data.first().map_or(0, Vec::len);
        if data.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidDataset("columns differ in length".into()));
        }
        let m = Matrix::from_fn(n, data.len(), |i, j| data[j][i]);
        Dataset::new(columns, m)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| Error::MissingColumn(name.into()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.values.column(self.column_index(name)?))
    }

    /// Indices of `names`, failing on the first absent one.
    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.column_index(n.as_ref())).collect()
    }

    /// Columns `names` as an `n × k` matrix, in the order given.
    pub fn matrix_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Matrix> {
        let idx = self.indices_of(names)?;
        let rows: Vec<usize> = (0..self.n_rows()).collect();
        Ok(self.values.select(&rows, &idx))
    }

    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        let m = self.matrix_of(names)?;
        Ok(Dataset { columns: names.iter().map(|s| s.as_ref().into()).collect(), values: m })
    }

    pub fn without_column(&self, name: &str) -> Result<Dataset> {
        let keep: Vec<&str> = self.columns.iter().map(String::as_str).filter(|c| *c != name).collect();
        if keep.len() == self.columns.len() {
            return Err(Error::MissingColumn(name.into()));
        }
        self.select(&keep)
    }

    /// Rows at the given indices, in that order.
    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        let cols: Vec<usize> = (0..self.n_cols()).collect();
        Dataset { columns: self.columns.clone(), values: self.values.select(rows, &cols) }
    }

    /// Appends a column, or overwrites it when the name already exists.
    pub fn with_column(&self, name: &str, values: &[f64]) -> Result<Dataset> {
        if values.len() != self.n_rows() {
            return Err(Error::DimensionMismatch(alloc::format!("column `{name}` length")));
        }
        if let Ok(j) = self.column_index(name) {
            let mut m = self.values.clone();
            for (i, &v) in values.iter().enumerate() {
                m[(i, j)] = v;
            }
            return self.with_values(m);
        }
        let p = self.n_cols();
        let m = Matrix::from_fn(self.n_rows(), p + 1, |i, j| if j < p { self.values[(i, j)] } else { values[i] });
        let mut columns = self.columns.clone();
        columns.push(name.into());
        Dataset::new(columns, m)
    }

    /// Replaces the values, keeping names. Shape must match.
    pub fn with_values(&self, values: Matrix) -> Result<Dataset> {
        if values.cols() != self.n_cols() {
            return Err(Error::DimensionMismatch("replacement values".into()));
        }
        Dataset::new(self.columns.clone(), values)
    }
}
