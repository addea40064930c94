//! Closed-form Gaussian information bottleneck restricted to a feature scope.
//!
//! Inputs and target are standardized on the source, the CCA operator of the
//! standardized covariance is diagonalized, the top directions are unwhitened
//! into an encoder and a least-squares decoder maps the code back to the
//! target.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_spd, Matrix};
use crate::numstats::{column_means, covariance_matrix, inv_sqrt, sym_eig, CovarianceBlocks, Ridge, Standardizer};
use crate::predictor::{AffinePredictor, Imputer};
use crate::sem::{Dataset, ImpliedMoments};

/// How the bottleneck dimension is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Bottleneck {
    /// Keep exactly this many directions (capped at the feature count).
    Dim(usize),
    /// Keep directions whose squared canonical correlation exceeds `1 − 1/β`.
    Beta(f64),
}

impl Default for Bottleneck {
    fn default() -> Self {
        Bottleneck::Dim(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibConfig {
    pub bottleneck: Bottleneck,
    pub ridge: Ridge,
}

/// CCA operator `Ω = Σ_XX^{-1/2} Σ_XT Σ_TT^{-1} Σ_TX Σ_XX^{-1/2}` together with
/// the whitener `Σ_XX^{-1/2}` used to map its eigenvectors back.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaOperator {
    pub omega: Matrix,
    pub whitener: Matrix,
}

/// Builds the CCA operator after adding `ridge` to `Σ_XX`.
pub fn build_cca_operator(blocks: &CovarianceBlocks, ridge: Ridge) -> Result<CcaOperator> {
    let sxx = ridge.apply(&blocks.sxx);
    let whitener = inv_sqrt(&sxx, None)?;
    let a = whitener.mul_vec(&blocks.sxt);
    let p = a.len();
    let omega = Matrix::from_fn(p, p, |i, j| a[i] * a[j] / blocks.stt).symmetrized();
    Ok(CcaOperator { omega, whitener })
}

/// Number of spectral directions kept at trade-off `β`: eigenvalues above
/// `1 − 1/β`, never fewer than one.
pub fn beta_to_dim(spectrum: &[f64], beta: f64) -> usize {
    if beta <= 1.0 {
        return 1;
    }
    let cutoff = 1.0 - 1.0 / beta;
    spectrum.iter().filter(|&&l| l > cutoff).count().max(1)
}

/// Fitted bottleneck: source standardizers, encoder `W` (p × d), decoder and
/// the full CCA spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibModel {
    pub features: Vec<String>,
    pub target: String,
    pub input_standardizer: Standardizer,
    pub target_standardizer: Standardizer,
    pub encoder: Matrix,
    pub decoder: Vec<f64>,
    pub intercept: f64,
    pub spectrum: Vec<f64>,
    pub config: GibConfig,
}

impl GibModel {
    pub fn dim(&self) -> usize {
        self.encoder.cols()
    }

    /// The model as a single affine map in original units.
    pub fn affine(&self) -> AffinePredictor {
        let wb = self.encoder.mul_vec(&self.decoder);
        let (mt, st) = (self.target_standardizer.means[0], self.target_standardizer.stds[0]);
        let s = &self.input_standardizer;
        let coefficients: Vec<f64> = wb.iter().zip(&s.stds).map(|(c, sd)| st * c / sd).collect();
        let shift: f64 = wb.iter().zip(s.means.iter().zip(&s.stds)).map(|(c, (m, sd))| c * m / sd).sum();
        AffinePredictor {
            target: self.target.clone(),
            features: self.features.clone(),
            intercept: mt + st * (self.intercept - shift),
            coefficients,
        }
    }

    /// Standardized code `Z = Wᵀ x_std` for each row.
    pub fn encode(&self, inputs: &Dataset) -> Result<Matrix> {
        Ok(self.input_standardizer.transform(inputs)?.matmul(&self.encoder))
    }
}

impl Imputer for GibModel {
    fn features(&self) -> &[String] {
        &self.features
    }

    fn target(&self) -> &str {
        &self.target
    }

    fn predict(&self, inputs: &Dataset) -> Result<Vec<f64>> {
        let z = self.encode(inputs)?;
        let (mt, st) = (self.target_standardizer.means[0], self.target_standardizer.stds[0]);
        Ok((0..z.rows()).map(|i| (self.intercept + dot(z.row(i), &self.decoder)) * st + mt).collect())
    }
}

/// Fit from the means and covariance of standardized `[features, target]`.
fn fit_standardized(
    cov: &Matrix,
    means: &[f64],
    features: Vec<String>,
    target: String,
    input_standardizer: Standardizer,
    target_standardizer: Standardizer,
    config: GibConfig,
) -> Result<GibModel> {
    let p = features.len();
    let mut names = features.clone();
    names.push(target.clone());
    let blocks = CovarianceBlocks::from_covariance(cov, &names, &names[..p], &target)?;
    let op = build_cca_operator(&blocks, config.ridge)?;
    let eig = sym_eig(&op.omega)?;
    let d = match config.bottleneck {
        Bottleneck::Dim(0) => return Err(Error::InvalidConfig("bottleneck dimension must be at least 1".into())),
        Bottleneck::Dim(d) => d.min(p),
        Bottleneck::Beta(b) if !(b > 0.0) => return Err(Error::InvalidConfig("beta must be positive".into())),
        Bottleneck::Beta(b) => beta_to_dim(&eig.values, b),
    };
    let encoder = op.whitener.matmul(&eig.vectors.leading_columns(d));
    // Least squares of standardized T on Z = Wᵀx, expressed through moments:
    // B = (Wᵀ Σ_XX W)⁻¹ Wᵀ Σ_XT and the intercept absorbs the mean offset.
    let gram = encoder.t_matmul(&blocks.sxx.matmul(&encoder)).symmetrized();
    let rhs = Matrix::column_vector(&encoder.t_mul_vec(&blocks.sxt));
    let decoder = solve_spd(&gram, &rhs)?.into_vec();
    let mean_z = encoder.t_mul_vec(&means[..p]);
    let intercept = means[p] - dot(&mean_z, &decoder);
    Ok(GibModel {
        features,
        target,
        input_standardizer,
        target_standardizer,
        encoder,
        decoder,
        intercept,
        spectrum: eig.values,
        config,
    })
}

/// Fits MB-GIB on source samples of `features` and `target`.
pub fn fit_gib<S: AsRef<str>>(source: &Dataset, features: &[S], target: &str, config: GibConfig) -> Result<GibModel> {
    let p = features.len();
    if p == 0 {
        return Err(Error::InvalidConfig("empty feature scope".into()));
    }
    let n = source.n_rows();
    if n <= p + 1 {
        return Err(Error::TooFewSamples { needed: p + 2, got: n });
    }
    let input_standardizer = Standardizer::fit(source, features)?;
    let target_standardizer = Standardizer::fit(source, &[target])?;
    let mut z = input_standardizer.transform(source)?;
    let t = target_standardizer.transform(source)?;
    let mut joint = Matrix::zeros(n, p + 1);
    for i in 0..n {
        let row = joint.row_mut(i);
        row[..p].copy_from_slice(z.row(i));
        row[p] = t[(i, 0)];
    }
    z = joint;
    let cov = covariance_matrix(&z)?;
    let means = column_means(&z);
    fit_standardized(
        &cov,
        &means,
        features.iter().map(|f| f.as_ref().into()).collect(),
        target.into(),
        input_standardizer,
        target_standardizer,
        config,
    )
}

/// Fits MB-GIB from population moments instead of samples.
pub fn fit_gib_population<S: AsRef<str>>(
    moments: &ImpliedMoments,
    features: &[S],
    target: &str,
    config: GibConfig,
) -> Result<GibModel> {
    let mut idx = moments.indices_of(features)?;
    idx.push(moments.index_of(target)?);
    let cov = moments.cov.select(&idx, &idx);
    let sd: Vec<f64> = (0..idx.len()).map(|i| cov[(i, i)].sqrt()).collect();
    let names: Vec<String> = idx.iter().map(|&i| moments.names[i].clone()).collect();
    for (s, name) in sd.iter().zip(&names) {
        if !(*s > 0.0) {
            return Err(Error::ConstantColumn(name.clone()));
        }
    }
    let corr = Matrix::from_fn(idx.len(), idx.len(), |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    let p = features.len();
    let mean: Vec<f64> = idx.iter().map(|&i| moments.mean[i]).collect();
    let input_standardizer =
        Standardizer { columns: names[..p].to_vec(), means: mean[..p].to_vec(), stds: sd[..p].to_vec() };
    let target_standardizer = Standardizer { columns: alloc::vec![target.into()], means: alloc::vec![mean[p]], stds: alloc::vec![sd[p]] };
    fit_standardized(
        &corr,
        &alloc::vec![0.0; p + 1],
        names[..p].to_vec(),
        target.into(),
        input_standardizer,
        target_standardizer,
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dag;
    use crate::eval::metrics;
    use crate::sem::{preset, Mechanism, PresetName, PresetParams, SemSpec};
    use alloc::vec;

    fn blocks(sxx: Matrix, sxt: Vec<f64>, stt: f64) -> CovarianceBlocks {
        let p = sxt.len();
        CovarianceBlocks {
            sxx,
            sxt,
            stt,
            features: (0..p).map(|i| alloc::format!("x{i}")).collect(),
            target: "t".into(),
        }
    }

    #[test]
    fn scalar_operator_is_squared_correlation() {
        let op = build_cca_operator(&blocks(Matrix::identity(1), vec![0.6], 1.0), Ridge::NONE).unwrap();
        assert!((op.omega[(0, 0)] - 0.36).abs() < 1e-15);
        let op = build_cca_operator(&blocks(Matrix::identity(3), vec![0.0; 3], 2.0), Ridge::NONE).unwrap();
        assert_eq!(op.omega.max_abs(), 0.0);
    }

    #[test]
    fn beta_rule() {
        let s = [0.9, 0.5, 0.1];
        assert_eq!(beta_to_dim(&s, 2.0), 1);
        assert_eq!(beta_to_dim(&s, 100.0), 1);
        assert_eq!(beta_to_dim(&s, 1.5), 2);
        assert_eq!(beta_to_dim(&s, 0.5), 1);
        assert_eq!(beta_to_dim(&s, 1e9), 1);
        assert_eq!(beta_to_dim(&[0.99, 0.98, 0.97], 1e9), 1);
        assert_eq!(beta_to_dim(&[0.99, 0.98, 0.97], 10.0), 3);
    }

    #[test]
    fn motivating_top_eigenvalue_is_bayes_r2() {
        let p = preset(PresetName::Motivating, &PresetParams::default()).unwrap();
        let m = p.source.implied_moments().unwrap();
        let blanket = p.dag.markov_blanket("T").unwrap();
        let model = fit_gib_population(&m, &blanket, "T", GibConfig { ridge: Ridge::NONE, ..Default::default() }).unwrap();
        // ‖w‖² = 6 with unit target noise.
        assert!((model.spectrum[0] - 6.0 / 7.0).abs() < 1e-12);
        assert!(model.spectrum[1..].iter().all(|l| l.abs() < 1e-12));
    }

    fn linear_pair(noise: f64) -> SemSpec {
        let dag = Dag::new(vec!["X1", "T"], vec![("X1", "T")]).unwrap();
        SemSpec::new(
            dag,
            vec![
                ("X1".into(), Mechanism::exogenous(1.0, 2.0)),
                ("T".into(), Mechanism { weights: vec![("X1".into(), 3.0)], ..Mechanism::exogenous(0.0, noise) }),
            ],
        )
        .unwrap()
    }

    #[test]
    fn noiseless_linear_recovery() {
        let spec = linear_pair(0.0);
        let train = spec.sample(200, 1).unwrap();
        let model = fit_gib(&train, &["X1"], "T", GibConfig::default()).unwrap();
        let test = spec.sample(100, 2).unwrap();
        let pred = model.predict(&test).unwrap();
        for (p, t) in pred.iter().zip(test.column("T").unwrap()) {
            assert!((p - t).abs() < 1e-8);
        }
        let one = Dataset::from_columns(vec!["X1".into()], &[vec![2.0]]).unwrap();
        assert!((model.predict(&one).unwrap()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn zero_input_predicts_source_mean() {
        let spec = linear_pair(1.0);
        let train = spec.sample(500, 3).unwrap();
        let model = fit_gib(&train, &["X1"], "T", GibConfig::default()).unwrap();
        let x_mean = model.input_standardizer.means[0];
        let at_mean = Dataset::from_columns(vec!["X1".into()], &[vec![x_mean]]).unwrap();
        let t = train.column("T").unwrap();
        let t_mean = t.iter().sum::<f64>() / t.len() as f64;
        assert!((model.predict(&at_mean).unwrap()[0] - t_mean).abs() < 1e-6);
    }

    #[test]
    fn independent_features_give_no_signal() {
        let dag = Dag::new(vec!["A", "B", "T"], vec![]).unwrap();
        let mech = |name: &str| (String::from(name), Mechanism::exogenous(0.0, 1.0));
        let spec = SemSpec::new(dag, vec![mech("A"), mech("B"), mech("T")]).unwrap();
        let model = fit_gib(&spec.sample(10_000, 4).unwrap(), &["A", "B"], "T", GibConfig::default()).unwrap();
        let test = spec.sample(10_000, 5).unwrap();
        let score = metrics(&test.column("T").unwrap(), &model.predict(&test).unwrap()).unwrap().r2;
        assert!(score.abs() <= 0.05, "{score}");
    }

    #[test]
    fn affine_export_matches_predict() {
        let p = preset(PresetName::SevenNodeCovariate, &PresetParams::default()).unwrap();
        let train = p.source.sample(1000, 6).unwrap();
        let blanket = p.dag.markov_blanket("T").unwrap();
        let model = fit_gib(&train, &blanket, "T", GibConfig::default()).unwrap();
        let test = p.target.sample(50, 7).unwrap();
        let a = model.predict(&test).unwrap();
        let b = model.affine().predict(&test).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn higher_dim_loses_nothing() {
        let p = preset(PresetName::SevenNodeCovariate, &PresetParams::default()).unwrap();
        let train = p.source.sample(10_000, 8).unwrap();
        let test = p.source.sample(10_000, 9).unwrap();
        let blanket = p.dag.markov_blanket("T").unwrap();
        let truth = test.column("T").unwrap();
        let mse = |d: usize| {
            let cfg = GibConfig { bottleneck: Bottleneck::Dim(d), ..Default::default() };
            let pred = fit_gib(&train, &blanket, "T", cfg).unwrap().predict(&test).unwrap();
            pred.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64
        };
        let base = mse(1);
        for d in 2..=blanket.len() {
            assert!((mse(d) - base).abs() <= 1e-6, "d={d}");
        }
    }

    #[test]
    fn rejects_tiny_samples() {
        let spec = linear_pair(1.0);
        let train = spec.sample(2, 1).unwrap();
        assert_eq!(fit_gib(&train, &["X1"], "T", GibConfig::default()), Err(Error::TooFewSamples { needed: 3, got: 2 }));
    }
}
