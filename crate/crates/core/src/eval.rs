//! Error metrics, the joint-Gaussian imputation baseline, the residual
//! invariance diagnostic and missing-completely-at-random masking.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix};
use crate::numstats::{column_means, covariance_matrix, Ridge};
use crate::predictor::{AffinePredictor, Imputer};
use crate::rng::Substreams;
use crate::sem::{Dataset, ImpliedMoments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub n: usize,
}

/// MAE, RMSE and `R² = 1 − SSE/SST` with SST taken about the truth mean.
pub fn metrics(truth: &[f64], predicted: &[f64]) -> Result<Metrics> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} truths for {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let n = truth.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = truth.iter().sum::<f64>() / nf;
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if !(sst > 0.0) {
        return Err(Error::DegenerateTruth);
    }
    let (mut abs, mut sse) = (0.0, 0.0);
    for (t, p) in truth.iter().zip(predicted) {
        let e = t - p;
        abs += e.abs();
        sse += e * e;
    }
    Ok(Metrics { mae: abs / nf, rmse: (sse / nf).sqrt(), r2: 1.0 - sse / sst, n })
}

/// Source-fitted joint Gaussian over every column, imputing `E[T | rest]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBnImputer {
    pub regression: AffinePredictor,
    pub ridge: Ridge,
}

fn conditional_mean(
    target: &str,
    names: &[String],
    mean: &[f64],
    cov: &Matrix,
    t: usize,
    ridge: Ridge,
) -> Result<AffinePredictor> {
    let rest: Vec<usize> = (0..names.len()).filter(|&i| i != t).collect();
    let features: Vec<String> = rest.iter().map(|&i| names[i].clone()).collect();
    if rest.is_empty() {
        return Ok(AffinePredictor::constant(target, mean[t]));
    }
    let sxx = ridge.apply(&cov.select(&rest, &rest));
    let sxt = Matrix::column_vector(&rest.iter().map(|&i| cov[(i, t)]).collect::<Vec<_>>());
    let coefficients = solve_spd(&sxx, &sxt).map_err(|_| {
        Error::IllConditioned { min: 0.0, floor: ridge.amount(&cov.select(&rest, &rest)) }
    })?;
    let coefficients = coefficients.into_vec();
    let intercept = mean[t] - rest.iter().zip(&coefficients).map(|(&i, c)| c * mean[i]).sum::<f64>();
    Ok(AffinePredictor { target: target.into(), features, intercept, coefficients })
}

impl GaussianBnImputer {
    pub fn fit(source: &Dataset, target: &str, ridge: Ridge) -> Result<Self> {
        let t = source.column_index(target)?;
        let cov = covariance_matrix(source.values())?;
        let mean = column_means(source.values());
        let regression = conditional_mean(target, source.columns(), &mean, &cov, t, ridge)?;
        Ok(GaussianBnImputer { regression, ridge })
    }

    /// The same imputer built from population moments.
    pub fn from_moments(moments: &ImpliedMoments, target: &str, ridge: Ridge) -> Result<Self> {
        let t = moments.index_of(target)?;
        let regression = conditional_mean(target, &moments.names, &moments.mean, &moments.cov, t, ridge)?;
        Ok(GaussianBnImputer { regression, ridge })
    }
}

impl Imputer for GaussianBnImputer {
    fn features(&self) -> &[String] {
        &self.regression.features
    }

    fn target(&self) -> &str {
        &self.regression.target
    }

    fn predict(&self, inputs: &Dataset) -> Result<Vec<f64>> {
        self.regression.predict(inputs)
    }
}

/// Residual summary of one domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
}

impl ResidualSummary {
    fn of(residuals: &[f64]) -> Result<Self> {
        let n = residuals.len();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let mean = residuals.iter().sum::<f64>() / n as f64;
        let variance = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(ResidualSummary { mean, variance, n })
    }
}

/// Comparison of source and target residuals of a source-fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub source: ResidualSummary,
    pub target: ResidualSummary,
    /// `|mean_t − mean_s|`.
    pub mean_shift: f64,
    /// `√(var_s/n_s + var_t/n_t)`.
    pub pooled_se: f64,
    /// Raised when the mean shift exceeds three pooled standard errors.
    pub flagged: bool,
}

pub const INVARIANCE_FLAG_SE: f64 = 3.0;

fn residuals(model: &dyn Imputer, data: &Dataset) -> Result<Vec<f64>> {
    let truth = data.column(model.target())?;
    let pred = model.predict(data)?;
    Ok(truth.iter().zip(&pred).map(|(t, p)| t - p).collect())
}

/// Residual comparison between domains. Both datasets must carry the
/// target column, so this is an audit tool for labelled target samples.
pub fn mb_invariance_diagnostic(model: &dyn Imputer, source: &Dataset, target: &Dataset) -> Result<InvarianceReport> {
    let s = ResidualSummary::of(&residuals(model, source)?)?;
    let t = ResidualSummary::of(&residuals(model, target)?)?;
    let mean_shift = (t.mean - s.mean).abs();
    let pooled_se = (s.variance / s.n as f64 + t.variance / t.n as f64).sqrt();
    Ok(InvarianceReport { source: s, target: t, mean_shift, pooled_se, flagged: mean_shift > INVARIANCE_FLAG_SE * pooled_se })
}

/// Replaces each entry of `columns` independently with probability `rate` by
/// the matching entry of `fill` (typically the source mean).
pub fn mask_mcar<S: AsRef<str>>(data: &Dataset, columns: &[S], fill: &[f64], rate: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidConfig(alloc::format!("missing rate {rate} outside [0, 1]")));
    }
    if fill.len() != columns.len() {
        return Err(Error::DimensionMismatch("fill values per masked column".into()));
    }
    if rate == 0.0 {
        return Ok(data.clone());
    }
    let idx = data.indices_of(columns)?;
    let mut values = data.values().clone();
    for (k, (&j, name)) in idx.iter().zip(columns).enumerate() {
        let mut streams = Substreams::new(seed, &alloc::format!("mcar/{}", name.as_ref()));
        for i in 0..values.rows() {
            if streams.at(i as u64).random::<f64>() < rate {
                values[(i, j)] = fill[k];
            }
        }
    }
    data.with_values(values)
}
