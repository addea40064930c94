//! Statistics kernel: sample covariance, symmetric eigendecomposition,
//! inverse square roots, operator norms, principal angles and
//! standardization.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

// Float methods come from `num_traits` unless std is linked somewhere in the
// build graph, in which case the inherent ones win and this import goes unused.
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::rng::stream_rng;
use crate::sem::Dataset;

/// Unbiased (`n − 1`) sample covariance of the columns of `x`.
pub fn covariance_matrix(x: &Matrix) -> Result<Matrix> {
    let (n, p) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Matrix::zeros(p, p);
    let mut centered = vec![0.0; p];
    for i in 0..n {
        for ((c, v), m) in centered.iter_mut().zip(x.row(i)).zip(&mean) {
            *c = v - m;
        }
        for a in 0..p {
            let ca = centered[a];
            let row = cov.row_mut(a);
            for b in a..p {
                row[b] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Sample covariance over all columns of `data`.
pub fn covariance(data: &Dataset) -> Result<Matrix> {
    covariance_matrix(data.values())
}

/// Column means of `x`.
pub fn column_means(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter().map(|m| m / n).collect()
}

/// Ridge added to an estimated covariance before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Ridge {
    /// `value · trace(Σ) / p`.
    RelativeTrace(f64),
    Absolute(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::RelativeTrace(1e-6)
    }
}

impl Ridge {
    pub const NONE: Ridge = Ridge::Absolute(0.0);

    pub fn amount(&self, sigma: &Matrix) -> f64 {
        match *self {
            Ridge::RelativeTrace(r) if sigma.rows() > 0 => r * sigma.trace() / sigma.rows() as f64,
            Ridge::RelativeTrace(_) => 0.0,
            Ridge::Absolute(a) => a,
        }
    }

    pub fn apply(&self, sigma: &Matrix) -> Matrix {
        let mut out = sigma.clone();
        out.add_diagonal(self.amount(sigma));
        out
    }
}

/// Feature/target blocks of a joint covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBlocks {
    pub sxx: Matrix,
    pub sxt: Vec<f64>,
    pub stt: f64,
    pub features: Vec<String>,
    pub target: String,
}

impl CovarianceBlocks {
    /// Extracts blocks from a covariance over `names`. `sxx` is symmetrized.
    pub fn from_covariance<S: AsRef<str>>(cov: &Matrix, names: &[S], features: &[S], target: &str) -> Result<Self> {
        let find = |n: &str| {
            names.iter().position(|x| x.as_ref() == n).ok_or_else(|| Error::MissingColumn(n.into()))
        };
        let f: Vec<usize> = features.iter().map(|n| find(n.as_ref())).collect::<Result<_>>()?;
        let t = find(target)?;
        let stt = cov[(t, t)];
        if !(stt > 0.0) {
            return Err(Error::ConstantColumn(target.into()));
        }
        Ok(CovarianceBlocks {
            sxx: cov.select(&f, &f).symmetrized(),
            sxt: f.iter().map(|&i| cov[(i, t)]).collect(),
            stt,
            features: features.iter().map(|s| s.as_ref().into()).collect(),
            target: target.into(),
        })
    }

    pub fn from_dataset<S: AsRef<str>>(data: &Dataset, features: &[S], target: &str) -> Result<Self> {
        let mut names: Vec<&str> = features.iter().map(AsRef::as_ref).collect();
        names.push(target);
        let cov = covariance_matrix(&data.matrix_of(&names)?)?;
        let (fnames, _) = names.split_at(features.len());
        CovarianceBlocks::from_covariance(&cov, &names, fnames, target)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Eigenvalues (descending) and matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Each eigenvector is signed so its largest-magnitude entry is positive.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("sym_eig of a non-square matrix".into()));
    }
    let scale = a.max_abs();
    let asym = a.asymmetry();
    if asym > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("sym_eig input".into()));
    }
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let mut converged = n <= 1;
    for sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].abs()).sum();
        if off == 0.0 {
            converged = true;
            break;
        }
        let threshold = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let g = 100.0 * apq.abs();
                let (app, aqq) = (m[(p, p)], m[(q, q)]);
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                if apq.abs() <= threshold || apq == 0.0 {
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 { -t } else { t }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let (akp, akq) = (m[(k, p)], m[(k, q)]);
                        let np = c * akp - s * akq;
                        let nq = s * akp + c * akq;
                        m[(k, p)] = np;
                        m[(p, k)] = np;
                        m[(k, q)] = nq;
                        m[(q, k)] = nq;
                    }
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values: Vec<f64> = idx.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in idx.iter().enumerate() {
        let mut best = 0;
        for k in 0..n {
            if v[(k, src)].abs() > v[(best, src)].abs() {
                best = k;
            }
        }
        let sign = if v[(best, src)] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[(k, col)] = sign * v[(k, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

fn spectral_function(eig: &SymEig, f: impl Fn(f64) -> f64) -> Matrix {
    let n = eig.values.len();
    let fv: Vec<f64> = eig.values.iter().map(|&l| f(l)).collect();
    let scaled = Matrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * fv[j]);
    scaled.matmul(&eig.vectors.transpose()).symmetrized()
}

/// Default eigenvalue floor for [`inv_sqrt`]: `1e-8 · λ_max`.
pub const INV_SQRT_RELATIVE_FLOOR: f64 = 1e-8;

/// `A^{-1/2} = V diag(λ^{-1/2}) Vᵀ` for symmetric positive definite `A`.
///
/// Fails with [`Error::IllConditioned`] when `λ_min` is below `floor`
/// (default `1e-8 · λ_max`).
pub fn inv_sqrt(a: &Matrix, floor: Option<f64>) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    let floor = floor.unwrap_or(INV_SQRT_RELATIVE_FLOOR * lmax);
    if !(lmax > 0.0) || lmin < floor || !(lmin > 0.0) {
        return Err(Error::IllConditioned { min: lmin, floor });
    }
    Ok(spectral_function(&eig, |l| 1.0 / l.sqrt()))
}

/// `A^{1/2}` for symmetric positive semidefinite `A` (negative eigenvalues
/// from rounding are clamped to zero).
pub fn sqrt_psd(a: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    Ok(spectral_function(&eig, |l| l.max(0.0).sqrt()))
}

const POWER_MAX_ITER: usize = 1000;
const POWER_TOL: f64 = 1e-10;

/// Largest singular value by power iteration on `AᵀA` from a fixed
/// pseudo-random start.
pub fn operator_norm(a: &Matrix) -> Result<f64> {
    let p = a.cols();
    if p == 0 || a.rows() == 0 {
        return Ok(0.0);
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("operator_norm input".into()));
    }
    let mut rng = stream_rng(0x5eed, "operator_norm", p as u64);
    let mut v: Vec<f64> = (0..p).map(|_| rng.random::<f64>() + 0.5).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let av = a.mul_vec(&v);
        let rayleigh = dot(&av, &av);
        let w = a.t_mul_vec(&av);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        if (rayleigh - prev).abs() <= POWER_TOL * rayleigh {
            return Ok(rayleigh.sqrt());
        }
        prev = rayleigh;
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(Error::NoConvergence(POWER_MAX_ITER))
}

/// Largest singular value from a full eigendecomposition of `AᵀA` (or of `A`
/// itself when symmetric). Slower than [`operator_norm`] but immune to the
/// slow convergence of power iteration when the top singular values nearly
/// coincide, which is typical of rounding-noise residuals.
pub fn operator_norm_exact(a: &Matrix) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    if a.is_square() && a.asymmetry() == 0.0 {
        let e = sym_eig(a)?;
        return Ok(e.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let gram = if a.rows() < a.cols() { a.matmul(&a.transpose()) } else { a.t_matmul(a) };
    Ok(sym_eig(&gram.symmetrized())?.values[0].max(0.0).sqrt())
}

/// Largest deviation of `UᵀU` from the identity.
pub fn orthonormality_error(u: &Matrix) -> f64 {
    u.t_matmul(u).sub(&Matrix::identity(u.cols())).max_abs()
}

/// Sine of the largest principal angle between the column spaces of two
/// `p × d` orthonormal bases, computed as `‖(I − VVᵀ)U‖_op`.
pub fn sin_theta(u: &Matrix, v: &Matrix) -> Result<f64> {
    if u.rows() != v.rows() || u.cols() != v.cols() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{}x{} vs {}x{}",
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols()
        )));
    }
    for m in [u, v] {
        let dev = orthonormality_error(m);
        if dev > 1e-8 {
            return Err(Error::NotOrthonormal(dev));
        }
    }
    let residual = u.sub(&v.matmul(&v.t_matmul(u)));
    Ok(operator_norm(&residual)?.min(1.0))
}

/// Per-column affine standardization fitted on source data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    /// Sample standard deviations (`n − 1` divisor).
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit<S: AsRef<str>>(data: &Dataset, columns: &[S]) -> Result<Self> {
        let x = data.matrix_of(columns)?;
        if x.rows() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: x.rows() });
        }
        let means = column_means(&x);
        let n = x.rows() as f64;
        let mut stds = Vec::with_capacity(x.cols());
        for (j, name) in columns.iter().enumerate() {
            let ss: f64 = (0..x.rows()).map(|i| (x[(i, j)] - means[j]).powi(2)).sum();
            let sd = (ss / (n - 1.0)).sqrt();
            if !(sd > 1e-12 * means[j].abs().max(1.0)) {
                return Err(Error::ConstantColumn(name.as_ref().into()));
            }
            stds.push(sd);
        }
        Ok(Standardizer { columns: columns.iter().map(|c| c.as_ref().into()).collect(), means, stds })
    }

    pub fn index_of(&self, column: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == column).ok_or_else(|| Error::MissingColumn(column.into()))
    }

    /// Standardized copy of `data`; columns this standardizer does not know are
    /// passed through unchanged.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let idx = data.indices_of(&self.columns)?;
        let mut values = data.values().clone();
        for i in 0..values.rows() {
            let row = values.row_mut(i);
            for (k, &j) in idx.iter().enumerate() {
                row[j] = (row[j] - self.means[k]) / self.stds[k];
            }
        }
        data.with_values(values)
    }

    /// Standardized `n × k` matrix of this standardizer's columns.
    pub fn transform(&self, data: &Dataset) -> Result<Matrix> {
        let mut x = data.matrix_of(&self.columns)?;
        for i in 0..x.rows() {
            for (k, v) in x.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.means[k]) / self.stds[k];
            }
        }
        Ok(x)
    }

    pub fn inverse_value(&self, k: usize, z: f64) -> f64 {
        z * self.stds[k] + self.means[k]
    }
}
