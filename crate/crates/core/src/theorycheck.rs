//! Numerical checks of the structural results behind blanket restriction:
//! the lossless restriction of the CCA spectrum, the metric identity, risk
//! transfer and the conditional-mean mismatch identity under shifts outside
//! the blanket, and the finite-sample concentration rates.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gib::{build_cca_operator, fit_gib, GibConfig};
use crate::graph::Dag;
use crate::linalg::{inverse_spd, solve_spd, Matrix};
use crate::numstats::{covariance_matrix, operator_norm_exact, sin_theta, sym_eig, CovarianceBlocks, Ridge};
use crate::predictor::{AffinePredictor, Imputer};
use crate::rng::{derive_seed, stream_rng};
use crate::sem::{Dataset, ImpliedMoments, Mechanism, MechanismOverride, PresetParams, SemSpec, ShiftSpec};

/// Acceptance rule of one measured quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtMost { value: f64 },
    AtLeast { value: f64 },
    Within { low: f64, high: f64 },
    /// Reported only.
    Info,
}

impl Bound {
    pub fn admits(&self, x: f64) -> bool {
        match *self {
            Bound::AtMost { value } => x <= value,
            Bound::AtLeast { value } => x >= value,
            Bound::Within { low, high } => (low..=high).contains(&x),
            Bound::Info => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    /// Monte Carlo standard error, when the value is an estimate.
    pub standard_error: Option<f64>,
    pub bound: Bound,
    pub passed: bool,
}

/// One row of a concentration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub covariance_error: f64,
    pub covariance_error_se: f64,
    pub subspace_error: f64,
    pub subspace_error_se: f64,
    pub excess_mse: f64,
    pub excess_mse_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub check: String,
    /// Conjunction of every measurement's `passed`.
    pub passed: bool,
    pub instance: Vec<(String, String)>,
    pub measurements: Vec<Measurement>,
    pub sweep: Vec<SweepRow>,
}

impl TheoryReport {
    pub fn new(check: &str) -> Self {
        TheoryReport { check: check.into(), passed: true, instance: Vec::new(), measurements: Vec::new(), sweep: Vec::new() }
    }

    pub fn describe(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.instance.push((key.into(), value.to_string()));
        self
    }

    pub fn measure(&mut self, name: &str, value: f64, bound: Bound) -> bool {
        self.measure_with_se(name, value, None, bound)
    }

    pub fn measure_with_se(&mut self, name: &str, value: f64, standard_error: Option<f64>, bound: Bound) -> bool {
        let passed = value.is_finite() && bound.admits(value) || matches!(bound, Bound::Info);
        self.passed &= passed;
        self.measurements.push(Measurement { name: name.into(), value, standard_error, bound, passed });
        passed
    }

    pub fn measurement(&self, name: &str) -> Option<&Measurement> {
        self.measurements.iter().find(|m| m.name == name)
    }
}

pub const LOSSLESS_TOLERANCE: f64 = 1e-8;
pub const METRIC_IDENTITY_TOLERANCE: f64 = 1e-9;

/// Index sets of target, blanket and the remaining nodes, positions in
/// `moments`.
struct Partition {
    t: usize,
    blanket: Vec<usize>,
    rest: Vec<usize>,
}

fn partition(dag: &Dag, moments: &ImpliedMoments, target: &str) -> Result<Partition> {
    let t = moments.index_of(target)?;
    let mb = dag.markov_blanket(target)?;
    let blanket = moments.indices_of(&mb)?;
    let rest = (0..moments.names.len()).filter(|i| *i != t && !blanket.contains(i)).collect();
    Ok(Partition { t, blanket, rest })
}

/// Covariance rescaled to unit diagonal. Every identity checked here is
/// covariant under diagonal rescaling, and the rescaled problem is far better
/// conditioned when variances spread over orders of magnitude.
fn correlation(cov: &Matrix) -> Matrix {
    let d: Vec<f64> = (0..cov.rows()).map(|i| 1.0 / cov[(i, i)].sqrt()).collect();
    Matrix::from_fn(cov.rows(), cov.cols(), |i, j| cov[(i, j)] * d[i] * d[j]).symmetrized()
}

fn top_eigen(cov: &Matrix, names: &[String], features: &[usize], t: usize) -> Result<(f64, Vec<f64>, Matrix)> {
    let f: Vec<String> = features.iter().map(|&i| names[i].clone()).collect();
    let blocks = CovarianceBlocks::from_covariance(cov, names, &f, &names[t])?;
    let op = build_cca_operator(&blocks, Ridge::NONE)?;
    let eig = sym_eig(&op.omega)?;
    Ok((eig.values[0], eig.vectors.column(0), op.whitener))
}

/// Lossless restriction: the global and blanket CCA operators share their
/// nonzero spectrum and the global top direction lies in the lifted blanket
/// subspace `range(Σ_XX^{-1/2} [I; B])`, `B = Σ_NM Σ_MM⁻¹`.
pub fn check_lossless(spec: &SemSpec, target: &str) -> Result<TheoryReport> {
    let moments = spec.implied_moments()?;
    let part = partition(spec.dag(), &moments, target)?;
    let mut report = TheoryReport::new("lossless_restriction");
    report
        .describe("target", target)
        .describe("p", moments.names.len() - 1)
        .describe("blanket_size", part.blanket.len());
    let cov = correlation(&moments.cov);
    let names = &moments.names;
    // Global scope lists the blanket first so [I; B] is block-aligned.
    let mut global = part.blanket.clone();
    global.extend(&part.rest);
    let (lambda_x, v, whitener) = top_eigen(&cov, names, &global, part.t)?;
    if part.blanket.is_empty() {
        report.measure("global_top_eigenvalue", lambda_x, Bound::AtMost { value: LOSSLESS_TOLERANCE });
        return Ok(report);
    }
    let (lambda_m, _, _) = top_eigen(&cov, names, &part.blanket, part.t)?;
    let scale = lambda_x.abs().max(lambda_m.abs()).max(f64::MIN_POSITIVE);
    report.measure("global_top_eigenvalue", lambda_x, Bound::Info);
    report.measure("blanket_top_eigenvalue", lambda_m, Bound::Info);
    report.measure(
        "eigenvalue_relative_gap",
        (lambda_x - lambda_m).abs() / scale,
        Bound::AtMost { value: LOSSLESS_TOLERANCE },
    );

    let m = part.blanket.len();
    let s_mm = cov.select(&part.blanket, &part.blanket);
    let s_nm = cov.select(&part.rest, &part.blanket);
    let lift = if part.rest.is_empty() {
        Matrix::identity(m)
    } else {
        let b = solve_spd(&s_mm, &s_nm.transpose())?.transpose();
        Matrix::from_fn(global.len(), m, |i, j| if i < m { f64::from(u8::from(i == j)) } else { b[(i - m, j)] })
    };
    let basis = whitener.matmul(&lift);
    let coef = solve_spd(&basis.t_matmul(&basis).symmetrized(), &Matrix::column_vector(&basis.t_mul_vec(&v)))?;
    let proj = basis.mul_vec(coef.as_slice());
    let residual = v.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    report.measure("lifted_subspace_residual", residual, Bound::AtMost { value: LOSSLESS_TOLERANCE });
    // In original coordinates the global direction carries no weight
    // outside the blanket.
    let direction = whitener.mul_vec(&v);
    let total = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    let outside = direction[m..].iter().map(|x| x * x).sum::<f64>().sqrt();
    report.measure("non_blanket_weight_fraction", outside / total, Bound::Info);
    Ok(report)
}

/// Metric identity `Lᵀ Σ_XX⁻¹ L = Σ_MM⁻¹` with `L = [I; Σ_NM Σ_MM⁻¹]`, and
/// `Σ_NT = Σ_NM Σ_MM⁻¹ Σ_MT`.
pub fn check_metric_identity(spec: &SemSpec, target: &str) -> Result<TheoryReport> {
    let moments = spec.implied_moments()?;
    let part = partition(spec.dag(), &moments, target)?;
    let mut report = TheoryReport::new("metric_identity");
    report
        .describe("target", target)
        .describe("blanket_size", part.blanket.len())
        .describe("rest_size", part.rest.len());
    let m = part.blanket.len();
    if m == 0 {
        report.measure("metric_residual", 0.0, Bound::AtMost { value: METRIC_IDENTITY_TOLERANCE });
        return Ok(report);
    }
    let cov = correlation(&moments.cov);
    let mut global = part.blanket.clone();
    global.extend(&part.rest);
    let s_mm = cov.select(&part.blanket, &part.blanket);
    let s_mm_inv = inverse_spd(&s_mm)?;
    let s_nm = cov.select(&part.rest, &part.blanket);
    let b = s_nm.matmul(&s_mm_inv);
    let lift = Matrix::from_fn(global.len(), m, |i, j| if i < m { f64::from(u8::from(i == j)) } else { b[(i - m, j)] });
    let s_xx_inv = inverse_spd(&cov.select(&global, &global))?;
    let lhs = lift.t_matmul(&s_xx_inv.matmul(&lift)).symmetrized();
    let scale = operator_norm_exact(&s_mm_inv)?;
    let residual = operator_norm_exact(&lhs.sub(&s_mm_inv))? / scale;
    report.measure("metric_residual", residual, Bound::AtMost { value: METRIC_IDENTITY_TOLERANCE });
    if !part.rest.is_empty() {
        let s_nt = cov.select(&part.rest, &[part.t]);
        let s_mt = cov.select(&part.blanket, &[part.t]);
        let implied = b.matmul(&s_mt);
        let denom = operator_norm_exact(&s_nm)? * scale * operator_norm_exact(&s_mt)?;
        let residual = operator_norm_exact(&s_nt.sub(&implied))? / denom.max(f64::MIN_POSITIVE);
        report.measure("cross_covariance_residual", residual, Bound::AtMost { value: METRIC_IDENTITY_TOLERANCE });
    }
    Ok(report)
}

/// Nodes whose mechanism changes between source and target, rejected when
/// any of them is the target, in its blanket, or an ancestor of either.
fn shift_outside_blanket(source: &SemSpec, target_spec: &SemSpec, target: &str, marginal_too: bool) -> Result<Vec<String>> {
    let changed = source.changed_nodes(target_spec)?;
    let dag = source.dag();
    let mut guarded = dag.markov_blanket(target)?;
    guarded.push(target.into());
    if marginal_too {
        let idx: Vec<usize> = guarded.iter().map(|n| dag.index_of(n)).collect::<Result<_>>()?;
        guarded.extend(dag.ancestor_indices(&idx).into_iter().map(|i| String::from(dag.name(i))));
    }
    if let Some(bad) = changed.iter().find(|c| guarded.contains(c)) {
        let what = if marginal_too { "blanket, target or their ancestors" } else { "blanket or target" };
        return Err(Error::PreconditionViolated(format!("shift changes `{bad}`, which is in the {what}")));
    }
    Ok(changed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskTransferConfig {
    pub n_fit: usize,
    pub n_eval: usize,
    pub seeds: usize,
    pub first_seed: u64,
    pub gib: GibConfig,
}

impl Default for RiskTransferConfig {
    fn default() -> Self {
        RiskTransferConfig { n_fit: 200, n_eval: 50_000, seeds: 5, first_seed: 0, gib: GibConfig::default() }
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn mse(truth: &[f64], pred: &[f64]) -> f64 {
    truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Excess MSE of a blanket-scope fit over the population Bayes predictor,
/// estimated on fresh source and target draws.
pub fn check_risk_transfer(source: &SemSpec, target_spec: &SemSpec, target: &str, config: &RiskTransferConfig) -> Result<TheoryReport> {
    let changed = shift_outside_blanket(source, target_spec, target, true)?;
    let blanket = source.dag().markov_blanket(target)?;
    let bayes = source.implied_moments()?.regression(target, &blanket)?;
    let mut report = TheoryReport::new("risk_transfer");
    report
        .describe("target", target)
        .describe("changed_nodes", changed.join(","))
        .describe("n_fit", config.n_fit)
        .describe("n_eval", config.n_eval)
        .describe("seeds", config.seeds);
    let (mut src, mut tgt) = (Vec::new(), Vec::new());
    for k in 0..config.seeds {
        let seed = config.first_seed + k as u64;
        let fit_data = source.sample(config.n_fit, derive_seed(seed, "risk/fit"))?;
        let model = fit_gib(&fit_data, &blanket, target, config.gib)?;
        let excess = |data: &Dataset| -> Result<f64> {
            let truth = data.column(target)?;
            Ok(mse(&truth, &model.predict(data)?) - mse(&truth, &bayes.predict(data)?))
        };
        let es = excess(&source.sample(config.n_eval, derive_seed(seed, "risk/source"))?)?;
        let et = excess(&target_spec.sample(config.n_eval, derive_seed(seed, "risk/target"))?)?;
        let tol = 0.02f64.max(0.1 * es);
        report.measure(&format!("seed_{seed}_source_excess"), es, Bound::Info);
        report.measure(&format!("seed_{seed}_target_excess"), et, Bound::Info);
        report.measure(&format!("seed_{seed}_excess_gap"), (es - et).abs(), Bound::AtMost { value: tol });
        src.push(es);
        tgt.push(et);
    }
    let (ms, ss) = mean_se(&src);
    let (mt, st) = mean_se(&tgt);
    report.measure_with_se("mean_source_excess", ms, Some(ss), Bound::Info);
    report.measure_with_se("mean_target_excess", mt, Some(st), Bound::Info);
    Ok(report)
}

/// `R_t(ĝ) − R_t(g⋆_t) = E_t[(ĝ − g⋆_s)²]` when the shift avoids the blanket
/// and the target, checked on `n_eval` target draws. Agreement means the mean
/// paired difference is within two standard errors (plus `1e-12` for
/// rounding when both sides vanish).
pub fn check_mismatch_identity(
    source: &SemSpec,
    target_spec: &SemSpec,
    target: &str,
    predictor: &dyn Imputer,
    n_eval: usize,
    seed: u64,
) -> Result<TheoryReport> {
    let changed = shift_outside_blanket(source, target_spec, target, false)?;
    let blanket = source.dag().markov_blanket(target)?;
    let g_s = source.implied_moments()?.regression(target, &blanket)?;
    let g_t = target_spec.implied_moments()?.regression(target, &blanket)?;
    let data = target_spec.sample(n_eval, derive_seed(seed, "mismatch/target"))?;
    let truth = data.column(target)?;
    let (ph, ps, pt) = (predictor.predict(&data)?, g_s.predict(&data)?, g_t.predict(&data)?);
    let n = truth.len();
    let (mut lhs, mut rhs, mut diff) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let l = (truth[i] - ph[i]).powi(2) - (truth[i] - pt[i]).powi(2);
        let r = (ph[i] - ps[i]).powi(2);
        lhs.push(l);
        rhs.push(r);
        diff.push(l - r);
    }
    let (ml, sl) = mean_se(&lhs);
    let (mr, sr) = mean_se(&rhs);
    let (md, sd) = mean_se(&diff);
    let mut report = TheoryReport::new("mismatch_identity");
    report.describe("target", target).describe("changed_nodes", changed.join(",")).describe("n_eval", n_eval);
    report.measure_with_se("target_excess_risk", ml, Some(sl), Bound::Info);
    report.measure_with_se("target_l2_mismatch", mr, Some(sr), Bound::Info);
    report.measure_with_se("difference", md.abs(), Some(sd), Bound::AtMost { value: 2.0 * sd + 1e-12 });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_grid: Vec<usize>,
    pub seeds: usize,
    pub first_seed: u64,
    pub gib: GibConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_grid: vec![250, 500, 1000, 2000, 4000, 8000, 16000],
            seeds: 20,
            first_seed: 0,
            gib: GibConfig::default(),
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Number of places where the sequence fails to decrease.
pub fn inversions(y: &[f64]) -> usize {
    y.windows(2).filter(|w| w[1] >= w[0]).count()
}

/// Exact `E[(ĝ − g)²]` for affine predictors under the given moments.
pub fn affine_l2_distance(a: &AffinePredictor, b: &AffinePredictor, moments: &ImpliedMoments) -> Result<f64> {
    if a.features != b.features {
        return Err(Error::DimensionMismatch("predictors use different features".into()));
    }
    let idx = moments.indices_of(&a.features)?;
    let dc: Vec<f64> = a.coefficients.iter().zip(&b.coefficients).map(|(x, y)| x - y).collect();
    let mu: Vec<f64> = idx.iter().map(|&i| moments.mean[i]).collect();
    let bias = a.intercept - b.intercept + dc.iter().zip(&mu).map(|(c, m)| c * m).sum::<f64>();
    let cov = moments.cov.select(&idx, &idx);
    let quad: f64 = dc.iter().zip(cov.mul_vec(&dc)).map(|(c, s)| c * s).sum();
    Ok(bias * bias + quad)
}

/// Concentration of the blanket covariance, the CCA subspace and the
/// excess risk of MB-GIB as the source sample grows.
pub fn concentration_sweep(spec: &SemSpec, target: &str, config: &SweepConfig) -> Result<TheoryReport> {
    if config.n_grid.len() < 2 || config.seeds == 0 {
        return Err(Error::InvalidConfig("sweep needs at least two sample sizes and one seed".into()));
    }
    let moments = spec.implied_moments()?;
    let blanket = spec.dag().markov_blanket(target)?;
    if blanket.is_empty() {
        return Err(Error::PreconditionViolated(format!("`{target}` has an empty blanket")));
    }
    let mut cols = blanket.clone();
    cols.push(target.into());
    let idx = moments.indices_of(&cols)?;
    let sigma = moments.cov.select(&idx, &idx);
    let p = blanket.len();
    let pop_blocks = CovarianceBlocks::from_covariance(&sigma, &cols, &cols[..p], target)?;
    let pop_op = build_cca_operator(&pop_blocks, Ridge::NONE)?;
    let pop_eig = sym_eig(&pop_op.omega)?;
    let u_star = pop_eig.vectors.leading_columns(1);
    let bayes = moments.regression(target, &blanket)?;

    let mut report = TheoryReport::new("concentration");
    report
        .describe("target", target)
        .describe("p", p)
        .describe("n_grid", config.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","))
        .describe("seeds", config.seeds)
        .describe("eigengap", pop_eig.values[0] - pop_eig.values.get(1).copied().unwrap_or(0.0));
    for &n in &config.n_grid {
        let (mut ce, mut se, mut ee) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..config.seeds {
            let seed = derive_seed(config.first_seed + k as u64, &format!("sweep/{n}"));
            let data = spec.sample(n, seed)?;
            let x = data.matrix_of(&cols)?;
            let s_hat = covariance_matrix(&x)?;
            ce.push(operator_norm_exact(&s_hat.sub(&sigma))?);
            let blocks = CovarianceBlocks::from_covariance(&s_hat, &cols, &cols[..p], target)?;
            let op = build_cca_operator(&blocks, Ridge::NONE)?;
            let u_hat = sym_eig(&op.omega)?.vectors.leading_columns(1);
            se.push(sin_theta(&u_hat, &u_star)?);
            let model = fit_gib(&data, &blanket, target, config.gib)?;
            ee.push(affine_l2_distance(&model.affine(), &bayes, &moments)?);
        }
        let (c, cs) = mean_se(&ce);
        let (s, ss) = mean_se(&se);
        let (e, es) = mean_se(&ee);
        report.sweep.push(SweepRow {
            n,
            covariance_error: c,
            covariance_error_se: cs,
            subspace_error: s,
            subspace_error_se: ss,
            excess_mse: e,
            excess_mse_se: es,
        });
    }
    let ns: Vec<f64> = report.sweep.iter().map(|r| r.n as f64).collect();
    let series: [(&str, Vec<f64>, Bound); 3] = [
        ("covariance", report.sweep.iter().map(|r| r.covariance_error).collect(), Bound::Within { low: -0.65, high: -0.35 }),
        ("subspace", report.sweep.iter().map(|r| r.subspace_error).collect(), Bound::Within { low: -0.65, high: -0.35 }),
        ("excess_mse", report.sweep.iter().map(|r| r.excess_mse).collect(), Bound::Within { low: -1.3, high: -0.7 }),
    ];
    for (name, ys, bound) in series {
        report.measure(&format!("{name}_slope"), log_log_slope(&ns, &ys), bound);
        report.measure(&format!("{name}_inversions"), inversions(&ys) as f64, Bound::AtMost { value: 1.0 });
    }
    Ok(report)
}

/// Random Gaussian SEM over `V0..V{p−1}`: each forward edge `i → j` with
/// probability `edge_probability`, weights uniform on `[−2, 2] \ {0}`, noise
/// standard deviations uniform on `[0.5, 2]`, intercepts uniform on `[−1, 1]`.
pub fn random_sem(p: usize, edge_probability: f64, seed: u64) -> Result<SemSpec> {
    let mut rng = stream_rng(seed, "random_sem", p as u64);
    let names: Vec<String> = (0..p).map(|i| format!("V{i}")).collect();
    let mut edges = Vec::new();
    let mut weights: Vec<Vec<(String, f64)>> = vec![Vec::new(); p];
    for j in 0..p {
        for i in 0..j {
            if rng.random::<f64>() < edge_probability {
                let mut w = 0.0;
                while w == 0.0 {
                    w = rng.random_range(-2.0..=2.0);
                }
                edges.push((names[i].clone(), names[j].clone()));
                weights[j].push((names[i].clone(), w));
            }
        }
    }
    let mechanisms = names
        .iter()
        .zip(weights)
        .map(|(n, w)| {
            let intercept = rng.random_range(-1.0..=1.0);
            let sigma = rng.random_range(0.5..=2.0);
            (n.clone(), Mechanism { weights: w, ..Mechanism::exogenous(intercept, sigma) })
        })
        .collect();
    SemSpec::new(Dag::new(names, edges)?, mechanisms)
}

/// Random SEM instance with a target drawn among nodes of nonempty blanket.
pub fn random_instance(seed: u64, max_nodes: usize) -> Result<(SemSpec, String)> {
    let mut rng = stream_rng(seed, "random_instance", 0);
    let p = rng.random_range(3..=max_nodes.max(3));
    let spec = random_sem(p, 0.3, seed)?;
    let candidates: Vec<&String> =
        spec.dag().nodes().iter().filter(|n| !spec.dag().markov_blanket(n).unwrap_or_default().is_empty()).collect();
    let target = if candidates.is_empty() {
        spec.dag().nodes()[rng.random_range(0..p)].clone()
    } else {
        candidates[rng.random_range(0..candidates.len())].clone()
    };
    Ok((spec, target))
}

/// Random instance whose blanket CCA eigengap is at least `min_gap`.
pub fn random_instance_with_gap(seed: u64, max_nodes: usize, min_gap: f64, max_tries: usize) -> Result<(SemSpec, String)> {
    for attempt in 0..max_tries as u64 {
        let (spec, target) = random_instance(derive_seed(seed, "gap").wrapping_add(attempt), max_nodes)?;
        let blanket = spec.dag().markov_blanket(&target)?;
        if blanket.is_empty() {
            continue;
        }
        let moments = spec.implied_moments()?;
        let mut cols = blanket.clone();
        cols.push(target.clone());
        let idx = moments.indices_of(&cols)?;
        let cov = correlation(&moments.cov.select(&idx, &idx));
        let blocks = CovarianceBlocks::from_covariance(&cov, &cols, &cols[..blanket.len()], &target)?;
        let eig = sym_eig(&build_cca_operator(&blocks, Ridge::NONE)?.omega)?;
        if eig.values[0] - eig.values.get(1).copied().unwrap_or(0.0) >= min_gap {
            return Ok((spec, target));
        }
    }
    Err(Error::NoConvergence(max_tries))
}

/// The motivating pair with only the nuisance intercepts shifted (`b₀ → b₁`),
/// proxy weights left at `a₀`.
pub fn motivating_nuisance_shift(params: &PresetParams) -> Result<(SemSpec, SemSpec)> {
    let p = crate::sem::preset(crate::sem::PresetName::Motivating, params)?;
    let mut shift = ShiftSpec::default();
    for l in 1..=params.r {
        shift = shift.with(&format!("N{l}"), MechanismOverride { intercept: Some(params.b1), ..Default::default() });
    }
    let target = p.source.apply_shift(&shift)?;
    Ok((p.source, target))
}

/// Settings of the full verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub random_instances: usize,
    pub max_nodes: usize,
    pub seed: u64,
    pub risk: RiskTransferConfig,
    pub mismatch_n_fit: usize,
    pub mismatch_n_eval: usize,
    pub sweep: SweepConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            random_instances: 50,
            max_nodes: 12,
            seed: 0,
            risk: RiskTransferConfig::default(),
            mismatch_n_fit: 200,
            mismatch_n_eval: 50_000,
            sweep: SweepConfig::default(),
        }
    }
}

/// Population instances for the structural checks: both presets followed by
/// `random_instances` random SEMs.
pub fn population_instances(config: &SuiteConfig) -> Result<Vec<(String, SemSpec, String)>> {
    let params = PresetParams::default();
    let mut out = Vec::new();
    for name in [crate::sem::PresetName::Motivating, crate::sem::PresetName::SevenNodeCovariate] {
        let p = crate::sem::preset(name, &params)?;
        out.push((name.as_str().into(), p.source, p.target_node));
    }
    for k in 0..config.random_instances {
        let seed = derive_seed(config.seed, "suite/random").wrapping_add(k as u64);
        let (spec, target) = random_instance(seed, config.max_nodes)?;
        out.push((format!("random_{k}"), spec, target));
    }
    Ok(out)
}

/// The three predictors of the mismatch identity on the nuisance-shift pair:
/// a small-sample MB-GIB fit, the population Bayes predictor and the zero
/// predictor.
pub fn mismatch_reports(source: &SemSpec, target_spec: &SemSpec, config: &SuiteConfig) -> Result<Vec<TheoryReport>> {
    let blanket = source.dag().markov_blanket("T")?;
    let fit_data = source.sample(config.mismatch_n_fit, derive_seed(config.seed, "mismatch/fit"))?;
    let fitted = fit_gib(&fit_data, &blanket, "T", GibConfig::default())?.affine();
    let bayes = source.implied_moments()?.regression("T", &blanket)?;
    let zero = AffinePredictor { features: blanket.clone(), coefficients: vec![0.0; blanket.len()], ..AffinePredictor::constant("T", 0.0) };
    let mut out = Vec::new();
    for (k, (label, g)) in [("mb_gib_fit", fitted), ("population_bayes", bayes), ("zero", zero)].into_iter().enumerate() {
        let mut r = check_mismatch_identity(source, target_spec, "T", &g, config.mismatch_n_eval, config.seed + k as u64)?;
        r.describe("predictor", label);
        out.push(r);
    }
    Ok(out)
}

/// Runs every check and returns the reports in a fixed order.
pub fn suite(config: &SuiteConfig) -> Result<Vec<TheoryReport>> {
    let mut reports = Vec::new();
    for (label, spec, target) in population_instances(config)? {
        for mut r in [check_lossless(&spec, &target)?, check_metric_identity(&spec, &target)?] {
            r.describe("instance", &label);
            reports.push(r);
        }
    }
    let (source, shifted) = motivating_nuisance_shift(&PresetParams::default())?;
    reports.push(check_risk_transfer(&source, &shifted, "T", &config.risk)?);
    reports.extend(mismatch_reports(&source, &shifted, config)?);
    let seven = crate::sem::preset(crate::sem::PresetName::SevenNodeCovariate, &PresetParams::default())?;
    reports.push(concentration_sweep(&seven.source, "T", &config.sweep)?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::{preset, PresetName};

    #[test]
    fn lossless_on_presets() {
        for name in [PresetName::Motivating, PresetName::SevenNodeCovariate] {
            let p = preset(name, &PresetParams::default()).unwrap();
            let r = check_lossless(&p.source, "T").unwrap();
            assert!(r.passed, "{r:?}");
        }
        let p = preset(PresetName::Motivating, &PresetParams::default()).unwrap();
        let r = check_lossless(&p.source, "T").unwrap();
        assert!((r.measurement("global_top_eigenvalue").unwrap().value - 6.0 / 7.0).abs() < 1e-10);
        assert!(r.measurement("non_blanket_weight_fraction").unwrap().value < 1e-8);
    }

    #[test]
    fn lossless_when_blanket_is_everything() {
        let dag = Dag::new(vec!["A", "B", "T"], vec![("A", "T"), ("B", "T")]).unwrap();
        let spec = SemSpec::new(
            dag,
            vec![
                ("A".into(), Mechanism::exogenous(0.0, 1.0)),
                ("B".into(), Mechanism::exogenous(0.0, 1.0)),
                ("T".into(), Mechanism { weights: vec![("A".into(), 1.0), ("B".into(), -1.0)], ..Mechanism::exogenous(0.0, 1.0) }),
            ],
        )
        .unwrap();
        let r = check_lossless(&spec, "T").unwrap();
        assert!(r.passed);
        assert_eq!(r.measurement("eigenvalue_relative_gap").unwrap().value, 0.0);
        let m = check_metric_identity(&spec, "T").unwrap();
        assert!(m.passed);
    }

    #[test]
    fn random_instances_pass_population_checks() {
        for seed in 0..20 {
            let (spec, t) = random_instance(seed, 10).unwrap();
            let r = check_metric_identity(&spec, &t).unwrap();
            assert!(r.passed, "seed {seed}: {r:?}");
            let r = check_lossless(&spec, &t).unwrap();
            assert!(r.passed, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn population_checks_are_deterministic() {
        let (spec, t) = random_instance(3, 12).unwrap();
        assert_eq!(check_lossless(&spec, &t).unwrap(), check_lossless(&spec, &t).unwrap());
    }

    #[test]
    fn risk_transfer_precondition() {
        let p = preset(PresetName::SevenNodeTargetShift, &PresetParams::default()).unwrap();
        let cfg = RiskTransferConfig { seeds: 1, n_eval: 1000, ..Default::default() };
        assert!(matches!(check_risk_transfer(&p.source, &p.target, "T", &cfg), Err(Error::PreconditionViolated(_))));
        let p = preset(PresetName::SevenNodeCovariate, &PresetParams::default()).unwrap();
        assert!(matches!(check_risk_transfer(&p.source, &p.target, "T", &cfg), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn identical_domains_transfer_risk() {
        let p = preset(PresetName::SevenNodeCovariate, &PresetParams::default()).unwrap();
        let cfg = RiskTransferConfig { seeds: 2, n_eval: 5000, ..Default::default() };
        let r = check_risk_transfer(&p.source, &p.source, "T", &cfg).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn mismatch_identity_with_bayes_predictor_vanishes() {
        let (s, t) = motivating_nuisance_shift(&PresetParams::default()).unwrap();
        let g = s.implied_moments().unwrap().regression("T", &["C1", "C2", "C3"]).unwrap();
        let r = check_mismatch_identity(&s, &t, "T", &g, 2000, 1).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.measurement("target_l2_mismatch").unwrap().value < 1e-20);
    }

    #[test]
    fn slope_helpers() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
        assert_eq!(inversions(&[3.0, 2.0, 2.5, 1.0]), 1);
    }

    #[test]
    fn random_sem_respects_ranges() {
        let spec = random_sem(12, 0.3, 9).unwrap();
        for (_, m) in spec.mechanisms() {
            assert!((0.5..=2.0).contains(&m.noise_std));
            assert!(m.weights.iter().all(|(_, w)| *w != 0.0 && w.abs() <= 2.0));
        }
    }
}
