//! Decoder likelihoods and the Gaussian KL term.

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Observation model of the decoder. The decoder emits the location, the
/// scale is one learned global parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Likelihood {
    #[default]
    Gaussian,
    Laplace,
    /// Degrees of freedom are fixed, not learned.
    StudentT {
        #[serde(default = "default_nu")]
        nu: f64,
    },
}

/// Default Student-t degrees of freedom.
pub const DEFAULT_NU: f64 = 4.0;

fn default_nu() -> f64 {
    DEFAULT_NU
}

impl Likelihood {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Likelihood::StudentT { nu } if !(nu > 2.0) || !nu.is_finite() => {
                Err(Error::InvalidConfig(alloc::format!("student-t likelihood needs finite nu > 2, got {nu}")))
            }
            _ => Ok(()),
        }
    }

    /// Negative log-density of `t` at `location` with scale `e^{log_scale}`.
    #[inline]
    pub fn nll_log_scale(&self, t: f64, location: f64, log_scale: f64) -> f64 {
        let r = t - location;
        let s = log_scale.exp();
        match *self {
            Likelihood::Gaussian => HALF_LN_2PI + log_scale + 0.5 * (r / s).powi(2),
            Likelihood::Laplace => core::f64::consts::LN_2 + log_scale + r.abs() / s,
            Likelihood::StudentT { nu } => {
                student_t_constant(nu) + log_scale + 0.5 * (nu + 1.0) * (r * r / (nu * s * s)).ln_1p()
            }
        }
    }

    /// `(∂/∂location, ∂/∂log_scale)` of [`Likelihood::nll_log_scale`].
    #[inline]
    pub fn nll_gradient(&self, t: f64, location: f64, log_scale: f64) -> (f64, f64) {
        let r = t - location;
        let s = log_scale.exp();
        match *self {
            Likelihood::Gaussian => {
                let u = r / s;
                (-u / s, 1.0 - u * u)
            }
            Likelihood::Laplace => {
                let sign = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (-sign / s, 1.0 - r.abs() / s)
            }
            Likelihood::StudentT { nu } => {
                let q = r * r / (nu * s * s);
                (-(nu + 1.0) * r / (nu * s * s + r * r), 1.0 - (nu + 1.0) * q / (1.0 + q))
            }
        }
    }
}

fn student_t_constant(nu: f64) -> f64 {
    libm::lgamma(0.5 * nu) - libm::lgamma(0.5 * (nu + 1.0)) + 0.5 * (nu * core::f64::consts::PI).ln()
}

/// Negative log-density with an explicit scale.
pub fn nll(family: Likelihood, t: f64, location: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NonPositiveScale(scale));
    }
    if let Likelihood::StudentT { nu } = family {
        if !(nu > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("student-t nu must be positive, got {nu}")));
        }
    }
    Ok(family.nll_log_scale(t, location, scale.ln()))
}

/// `KL(N(μ, diag e^{logvar}) ‖ N(0, I))`.
pub fn kl_to_standard_normal(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::DimensionMismatch("mean and log-variance lengths differ".into()));
    }
    if mu.iter().chain(logvar).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("KL input".into()));
    }
    Ok(kl_unchecked(mu, logvar))
}

#[inline]
pub(crate) fn kl_unchecked(mu: &[f64], logvar: &[f64]) -> f64 {
    // expm1(lv) - lv keeps precision near lv = 0 where the KL vanishes.
    0.5 * mu.iter().zip(logvar).map(|(m, lv)| m * m + lv.exp_m1() - lv).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_closed_form_values() {
        assert_eq!(kl_to_standard_normal(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!((kl_to_standard_normal(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        let expect = 0.5 * (4.0 - 1.0 - 4.0f64.ln());
        assert!((kl_to_standard_normal(&[0.0], &[4.0f64.ln()]).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.8069).abs() < 1e-4);
        assert!(kl_to_standard_normal(&[f64::NAN], &[0.0]).is_err());
    }

    #[test]
    fn nll_reference_values() {
        assert!((nll(Likelihood::Gaussian, 1.0, 1.0, 1.0).unwrap() - 0.9189).abs() < 1e-4);
        assert!((nll(Likelihood::Laplace, 2.0, 1.0, 1.0).unwrap() - 1.6931).abs() < 1e-4);
        assert!(matches!(nll(Likelihood::Gaussian, 0.0, 0.0, 0.0), Err(Error::NonPositiveScale(_))));
    }

    #[test]
    fn student_t_approaches_gaussian() {
        let t = Likelihood::StudentT { nu: 1e6 };
        for &(x, loc, s) in &[(0.3, -0.2, 0.7), (2.0, 0.0, 1.5), (-1.0, 1.0, 0.4)] {
            let a = nll(t, x, loc, s).unwrap();
            let b = nll(Likelihood::Gaussian, x, loc, s).unwrap();
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn student_t_matches_density_oracle() {
        // ν = 3 has the closed form 2 / (π √3 s (1 + r²/(3 s²))²).
        let (x, loc, s) = (0.8, -0.1, 1.3);
        let r = x - loc;
        let density = 2.0 / (core::f64::consts::PI * 3.0f64.sqrt() * s * (1.0 + r * r / (3.0 * s * s)).powi(2));
        let got = nll(Likelihood::StudentT { nu: 3.0 }, x, loc, s).unwrap();
        assert!((got + density.ln()).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let h = 1e-6;
        for fam in [Likelihood::Gaussian, Likelihood::Laplace, Likelihood::StudentT { nu: 4.0 }] {
            for &(t, loc, ls) in &[(0.5, 0.1, 0.2), (-1.0, 0.7, -0.3)] {
                let (dl, ds) = fam.nll_gradient(t, loc, ls);
                let fl = (fam.nll_log_scale(t, loc + h, ls) - fam.nll_log_scale(t, loc - h, ls)) / (2.0 * h);
                let fs = (fam.nll_log_scale(t, loc, ls + h) - fam.nll_log_scale(t, loc, ls - h)) / (2.0 * h);
                assert!((dl - fl).abs() < 1e-7 && (ds - fs).abs() < 1e-7, "{fam:?}");
            }
        }
    }
}
