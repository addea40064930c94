//! The common prediction surface shared by every fitted model.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::sem::Dataset;

/// Anything that imputes the target from a dataset holding its features.
pub trait Imputer {
    /// Input columns the model reads, in model order.
    fn features(&self) -> &[String];
    /// Name of the imputed column.
    fn target(&self) -> &str;
    /// One prediction per row of `inputs`, in original target units.
    fn predict(&self, inputs: &Dataset) -> Result<Vec<f64>>;
}

/// `intercept + coefficientsᵀ x` over named features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePredictor {
    pub target: String,
    pub features: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl AffinePredictor {
    pub fn constant(target: &str, value: f64) -> Self {
        AffinePredictor { target: target.into(), features: Vec::new(), intercept: value, coefficients: Vec::new() }
    }

    pub fn eval_row(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, x)
    }
}

impl Imputer for AffinePredictor {
    fn features(&self) -> &[String] {
        &self.features
    }

    fn target(&self) -> &str {
        &self.target
    }

    fn predict(&self, inputs: &Dataset) -> Result<Vec<f64>> {
        if self.features.is_empty() {
            return Ok(alloc::vec![self.intercept; inputs.n_rows()]);
        }
        let x = inputs.matrix_of(&self.features)?;
        if x.cols() != self.coefficients.len() {
            return Err(Error::DimensionMismatch("affine coefficients".into()));
        }
        Ok((0..x.rows()).map(|i| self.eval_row(x.row(i))).collect())
    }
}
