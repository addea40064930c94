//! Variational information bottleneck over a feature scope.
//!
//! A stochastic encoder maps standardized inputs to a diagonal Gaussian code,
//! one reparameterized sample per datum feeds a decoder that emits the
//! location of a Gaussian, Laplace or Student-t likelihood, and the KL term to
//! a standard normal prior is weighted by `β`. Training uses Adam with early
//! stopping on a held-out part of the source.

mod likelihood;
mod network;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::numstats::Standardizer;
use crate::predictor::Imputer;
use crate::rng::{permutation, stream_rng, Substreams};
use crate::sem::Dataset;

pub use likelihood::{kl_to_standard_normal, nll, Likelihood};
pub use network::{Activation, Dense, Objective, VibParams};
use network::{batch_loss, decode, encode_into, latent_logvar, latent_mean, set_latent_to_mean, Workspace};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const MIN_TRAINING_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VibConfig {
    pub latent_dim: usize,
    pub beta: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub likelihood: Likelihood,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Sample the latent during training; off gives a deterministic encoder.
    pub stochastic: bool,
    /// Learn the global decoder log-scale; off pins it at 0 (unit scale).
    pub learn_scale: bool,
}

impl Default for VibConfig {
    fn default() -> Self {
        VibConfig {
            latent_dim: 8,
            beta: 0.003,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            likelihood: Likelihood::Gaussian,
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.2,
            seed: 0,
            stochastic: true,
            learn_scale: true,
        }
    }
}

impl VibConfig {
    /// The plain network baseline: no compression, deterministic code and a
    /// unit-scale Gaussian likelihood, which makes the objective MSE.
    pub fn dnn() -> Self {
        VibConfig { beta: 0.0, stochastic: false, learn_scale: false, likelihood: Likelihood::Gaussian, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta must be finite and non-negative");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        self.likelihood.validate()
    }

    pub fn objective(&self) -> Objective {
        Objective {
            beta: self.beta,
            likelihood: self.likelihood,
            activation: self.activation,
            stochastic: self.stochastic,
            learn_scale: self.learn_scale,
        }
    }
}

/// What happened during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    /// Epochs completed when the kept snapshot was taken (0 = initial weights).
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub learning_rate: f64,
    /// Whether the learning rate had to be halved after a divergence.
    pub halved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibModel {
    pub features: Vec<String>,
    pub target: String,
    pub input_standardizer: Standardizer,
    pub target_standardizer: Standardizer,
    pub config: VibConfig,
    pub params: VibParams,
    pub training: TrainingSummary,
}

impl VibModel {
    /// Encoder means and log-variances for every row of `inputs`.
    pub fn encode(&self, inputs: &Dataset) -> Result<(Matrix, Matrix)> {
        let x = self.input_standardizer.transform(inputs)?;
        let k = self.params.latent_dim();
        let mut ws = Workspace::new(&self.params);
        let (mut mu, mut lv) = (Matrix::zeros(x.rows(), k), Matrix::zeros(x.rows(), k));
        for i in 0..x.rows() {
            encode_into(&self.params, self.config.activation, x.row(i), &mut ws);
            mu.row_mut(i).copy_from_slice(latent_mean(&ws));
            lv.row_mut(i).copy_from_slice(latent_logvar(&ws));
        }
        Ok((mu, lv))
    }

    /// Average `KL(q(z|x) ‖ N(0, I))` over the rows of `inputs`.
    pub fn mean_kl(&self, inputs: &Dataset) -> Result<f64> {
        let (mu, lv) = self.encode(inputs)?;
        let mut total = 0.0;
        for i in 0..mu.rows() {
            total += kl_to_standard_normal(mu.row(i), lv.row(i))?;
        }
        Ok(total / mu.rows() as f64)
    }

    pub fn decoder_scale(&self) -> f64 {
        self.params.log_scale.exp() * self.target_standardizer.stds[0]
    }
}

impl Imputer for VibModel {
    fn features(&self) -> &[String] {
        &self.features
    }

    fn target(&self) -> &str {
        &self.target
    }

    /// Deterministic: the code is the encoder mean and the output is the
    /// decoder location in original units.
    fn predict(&self, inputs: &Dataset) -> Result<Vec<f64>> {
        let x = self.input_standardizer.transform(inputs)?;
        let (mt, st) = (self.target_standardizer.means[0], self.target_standardizer.stds[0]);
        let mut ws = Workspace::new(&self.params);
        let mut out = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            encode_into(&self.params, self.config.activation, x.row(i), &mut ws);
            set_latent_to_mean(&mut ws);
            let loc = decode(&self.params, self.config.activation, &mut ws);
            let y = loc * st + mt;
            if !y.is_finite() {
                return Err(Error::NonFinite(alloc::format!("prediction for row {i}")));
            }
            out.push(y);
        }
        Ok(out)
    }
}

/// Mean loss of `params` on all rows of `x`, with one row of `eps` per datum,
/// and its gradient.
pub fn loss_and_gradient(params: &VibParams, obj: &Objective, x: &Matrix, t: &[f64], eps: &Matrix) -> (f64, VibParams) {
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut ws = Workspace::new(params);
    let mut grad = params.zeros_like();
    let loss = batch_loss(params, obj, x, t, &rows, eps, &mut ws, Some(&mut grad));
    (loss, grad)
}

/// Mean loss without gradient.
pub fn loss(params: &VibParams, obj: &Objective, x: &Matrix, t: &[f64], eps: &Matrix) -> f64 {
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut ws = Workspace::new(params);
    batch_loss(params, obj, x, t, &rows, eps, &mut ws, None)
}

/// Analytic versus central-difference gradient of one tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorGradientCheck {
    pub name: String,
    pub size: usize,
    pub max_abs_error: f64,
    /// Largest gradient magnitude of either estimate.
    pub scale: f64,
    /// `max_abs_error / scale` (0 when both gradients vanish).
    pub relative_error: f64,
}

/// Compares the analytic gradient with central differences of step `h` for
/// every parameter, with `eps` held fixed.
pub fn gradient_check(params: &VibParams, obj: &Objective, x: &Matrix, t: &[f64], eps: &Matrix, h: f64) -> Vec<TensorGradientCheck> {
    let (_, grad) = loss_and_gradient(params, obj, x, t, eps);
    let names: Vec<(String, usize)> = params.tensors().iter().map(|(n, v)| (n.clone(), v.len())).collect();
    let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(|(_, v)| v.to_vec()).collect();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(names.len());
    for (k, (name, size)) in names.into_iter().enumerate() {
        let mut max_abs_error = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..size {
            let original = probe.tensors_mut()[k][j];
            probe.tensors_mut()[k][j] = original + h;
            let up = loss(&probe, obj, x, t, eps);
            probe.tensors_mut()[k][j] = original - h;
            let down = loss(&probe, obj, x, t, eps);
            probe.tensors_mut()[k][j] = original;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k][j];
            max_abs_error = max_abs_error.max((a - numeric).abs());
            scale = scale.max(a.abs()).max(numeric.abs());
        }
        let relative_error = if scale > 0.0 { max_abs_error / scale } else { 0.0 };
        out.push(TensorGradientCheck { name, size, max_abs_error, scale, relative_error });
    }
    out
}

fn draw_noise(streams: &mut Substreams, step: u64, rows: usize, k: usize) -> Matrix {
    let rng = streams.at(step);
    Matrix::from_fn(rows, k, |_, _| StandardNormal.sample(rng))
}

struct Adam {
    m: VibParams,
    v: VibParams,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(params: &VibParams, lr: f64) -> Self {
        Adam { m: params.zeros_like(), v: params.zeros_like(), step: 0, lr }
    }

    fn update(&mut self, params: &mut VibParams, grad: &VibParams) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let grads = grad.tensors();
        for (((p, m), v), (_, g)) in params.tensors_mut().into_iter().zip(self.m.tensors_mut()).zip(self.v.tensors_mut()).zip(grads) {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPSILON);
            }
        }
    }
}

struct Split<'a> {
    x: &'a Matrix,
    t: &'a [f64],
    train: &'a [usize],
    validation: &'a [usize],
}

fn validation_loss(params: &VibParams, config: &VibConfig, split: &Split<'_>, ws: &mut Workspace) -> f64 {
    let obj = Objective { stochastic: false, ..config.objective() };
    let eps = Matrix::zeros(split.validation.len(), params.latent_dim());
    batch_loss(params, &obj, split.x, split.t, split.validation, &eps, ws, None)
}

fn train(config: &VibConfig, lr: f64, split: &Split<'_>) -> Result<(VibParams, TrainingSummary)> {
    let p = split.x.cols();
    let mut params = VibParams::init(p, &config.hidden, config.latent_dim, &mut stream_rng(config.seed, "vib/init", 0));
    let obj = config.objective();
    let mut ws = Workspace::new(&params);
    let mut grad = params.zeros_like();
    let mut adam = Adam::new(&params, lr);
    let mut noise = Substreams::new(config.seed, "vib/eps");
    let diverged = |what: &str| Error::Diverged(alloc::format!("non-finite {what} at learning rate {lr:e}"));

    let mut best_loss = validation_loss(&params, config, split, &mut ws);
    if !best_loss.is_finite() {
        return Err(diverged("initial validation loss"));
    }
    let mut best = params.clone();
    let (mut best_epoch, mut since_best, mut epochs_run) = (0, 0, 0);
    let mut order = split.train.to_vec();
    let mut step = 0u64;
    for epoch in 0..config.max_epochs {
        order.copy_from_slice(split.train);
        order.shuffle(&mut stream_rng(config.seed, "vib/epoch", epoch as u64));
        for batch in order.chunks(config.batch_size) {
            let eps = draw_noise(&mut noise, step, batch.len(), config.latent_dim);
            let l = batch_loss(&params, &obj, split.x, split.t, batch, &eps, &mut ws, Some(&mut grad));
            if !l.is_finite() {
                return Err(diverged("training loss"));
            }
            adam.update(&mut params, &grad);
            step += 1;
        }
        epochs_run = epoch + 1;
        let vl = validation_loss(&params, config, split, &mut ws);
        if !vl.is_finite() || !params.is_finite() {
            return Err(diverged("validation loss"));
        }
        if vl < best_loss {
            best_loss = vl;
            best.clone_from(&params);
            best_epoch = epochs_run;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok((
        best,
        TrainingSummary { epochs_run, best_epoch, best_validation_loss: best_loss, learning_rate: lr, halved: false },
    ))
}

/// Trains MB-VIB on the source. Deterministic for a fixed configuration.
pub fn fit_vib<S: AsRef<str>>(source: &Dataset, features: &[S], target: &str, config: &VibConfig) -> Result<VibModel> {
    config.validate()?;
    if features.is_empty() {
        return Err(Error::InvalidConfig("empty feature scope".into()));
    }
    let n = source.n_rows();
    if n < MIN_TRAINING_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_TRAINING_SAMPLES, got: n });
    }
    let input_standardizer = Standardizer::fit(source, features)?;
    let target_standardizer = Standardizer::fit(source, &[target])?;
    let x = input_standardizer.transform(source)?;
    let t = target_standardizer.transform(source)?.into_vec();

    let perm = permutation(config.seed, "vib/split", n);
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1);
    let (validation, train_rows) = perm.split_at(n_val);
    let split = Split { x: &x, t: &t, train: train_rows, validation };

    let (params, training) = match train(config, config.learning_rate, &split) {
        Ok(done) => done,
        Err(Error::Diverged(_)) => {
            let (params, mut summary) = train(config, 0.5 * config.learning_rate, &split)?;
            summary.halved = true;
            (params, summary)
        }
        Err(e) => return Err(e),
    };
    Ok(VibModel {
        features: features.iter().map(|f| f.as_ref().into()).collect(),
        target: target.into(),
        input_standardizer,
        target_standardizer,
        config: config.clone(),
        params,
        training,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics;
    use crate::graph::Dag;
    use crate::sem::{Mechanism, SemSpec};
    use rand::Rng;

    fn small_params(p: usize, k: usize, seed: u64) -> VibParams {
        VibParams::init(p, &[5, 4], k, &mut stream_rng(seed, "test-init", 0))
    }

    fn batch(p: usize, k: usize) -> (Matrix, Vec<f64>, Matrix) {
        let mut rng = stream_rng(3, "test-batch", 0);
        let x = Matrix::from_fn(4, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let t: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let eps = Matrix::from_fn(4, k, |_, _| StandardNormal.sample(&mut rng));
        (x, t, eps)
    }

    #[test]
    fn gradients_match_finite_differences_all_families() {
        for likelihood in [Likelihood::Gaussian, Likelihood::Laplace, Likelihood::StudentT { nu: 4.0 }] {
            for activation in [Activation::Tanh, Activation::Relu] {
                let params = small_params(3, 2, 1);
                let (x, t, eps) = batch(3, 2);
                let obj = Objective { beta: 0.7, likelihood, activation, stochastic: true, learn_scale: true };
                for check in gradient_check(&params, &obj, &x, &t, &eps, 1e-5) {
                    assert!(check.relative_error <= 1e-4, "{likelihood:?} {activation:?} {check:?}");
                }
            }
        }
    }

    #[test]
    fn beta_zero_is_pure_nll_and_zero_code_has_no_kl() {
        let mut params = small_params(2, 3, 2);
        let (x, t, eps) = batch(2, 3);
        let base = Objective { beta: 0.0, likelihood: Likelihood::Gaussian, activation: Activation::Tanh, stochastic: true, learn_scale: true };
        let heavy = Objective { beta: 10.0, ..base };
        assert!(loss(&params, &heavy, &x, &t, &eps) > loss(&params, &base, &x, &t, &eps));
        for d in [&mut params.mean_head, &mut params.logvar_head] {
            d.weight.iter_mut().for_each(|v| *v = 0.0);
            d.bias.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(loss(&params, &heavy, &x, &t, &eps), loss(&params, &base, &x, &t, &eps));
    }

    fn linear_spec(noise: f64, weight: f64) -> SemSpec {
        let dag = Dag::new(vec!["X1", "X2", "T"], vec![("X1", "T")]).unwrap();
        SemSpec::new(
            dag,
            vec![
                ("X1".into(), Mechanism::exogenous(0.0, 1.0)),
                ("X2".into(), Mechanism::exogenous(0.0, 1.0)),
                ("T".into(), Mechanism { weights: vec![("X1".into(), weight)], ..Mechanism::exogenous(0.0, noise) }),
            ],
        )
        .unwrap()
    }

    fn quick(latent_dim: usize) -> VibConfig {
        VibConfig { latent_dim, hidden: vec![16, 16], max_epochs: 150, learning_rate: 3e-3, ..Default::default() }
    }

    #[test]
    fn learns_linear_map() {
        let spec = linear_spec(0.1, 2.0);
        let train = spec.sample(1000, 1).unwrap();
        let model = fit_vib(&train, &["X1", "X2"], "T", &quick(4)).unwrap();
        let test = spec.sample(1000, 2).unwrap();
        let m = metrics(&test.column("T").unwrap(), &model.predict(&test).unwrap()).unwrap();
        assert!(m.r2 >= 0.95, "{m:?}");
        let one = Dataset::from_columns(vec!["X1".into(), "X2".into()], &[vec![1.0], vec![0.0]]).unwrap();
        let y = model.predict(&one).unwrap()[0];
        assert!((1.8..=2.2).contains(&y), "{y}");
        assert_eq!(model.predict(&one).unwrap(), model.predict(&one).unwrap());
        let far = Dataset::from_columns(vec!["X1".into(), "X2".into()], &[vec![10.0], vec![-10.0]]).unwrap();
        assert!(model.predict(&far).unwrap()[0].is_finite());
    }

    #[test]
    fn pure_noise_has_no_skill() {
        let spec = linear_spec(1.0, 0.0);
        let train = spec.sample(1000, 3).unwrap();
        let model = fit_vib(&train, &["X1", "X2"], "T", &quick(4)).unwrap();
        let test = spec.sample(2000, 4).unwrap();
        let r2 = metrics(&test.column("T").unwrap(), &model.predict(&test).unwrap()).unwrap().r2;
        assert!((-0.1..=0.1).contains(&r2), "{r2}");
    }

    #[test]
    fn training_is_deterministic() {
        let spec = linear_spec(0.5, 1.0);
        let train = spec.sample(300, 5).unwrap();
        let cfg = VibConfig { max_epochs: 15, ..quick(2) };
        let a = fit_vib(&train, &["X1", "X2"], "T", &cfg).unwrap();
        let b = fit_vib(&train, &["X1", "X2"], "T", &cfg).unwrap();
        assert_eq!(a.training.best_validation_loss.to_bits(), b.training.best_validation_loss.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn dnn_mode_keeps_unit_scale() {
        let spec = linear_spec(0.5, 1.0);
        let train = spec.sample(300, 6).unwrap();
        let cfg = VibConfig { max_epochs: 10, hidden: vec![8], ..VibConfig::dnn() };
        let model = fit_vib(&train, &["X1"], "T", &cfg).unwrap();
        assert_eq!(model.params.log_scale, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = linear_spec(0.5, 1.0);
        let tiny = spec.sample(49, 7).unwrap();
        assert_eq!(fit_vib(&tiny, &["X1"], "T", &quick(2)), Err(Error::TooFewSamples { needed: 50, got: 49 }));
        let cfg = VibConfig { likelihood: Likelihood::StudentT { nu: 2.0 }, ..quick(2) };
        assert!(matches!(fit_vib(&spec.sample(60, 7).unwrap(), &["X1"], "T", &cfg), Err(Error::InvalidConfig(_))));
        assert!(matches!(VibConfig { latent_dim: 0, ..quick(1) }.validate(), Err(Error::InvalidConfig(_))));
    }
}
