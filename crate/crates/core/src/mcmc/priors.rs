use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::sample_ig;
use crate::special::ln_gamma;

/// How the two-parameter "IG" priors on I and sigma are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    /// Inverse-Gaussian with (mean, shape).
    #[default]
    InverseGaussian,
    /// Inverse-gamma with (shape, scale).
    InverseGamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub family: PriorFamily,
    pub alpha_i: f64,
    pub beta_i: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    /// Gamma(shape, rate) prior on delta.
    pub alpha_delta: f64,
    pub beta_delta: f64,
    /// Half-t degrees of freedom and scale for sqrt(tau).
    pub nu: f64,
    pub gamma: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            family: PriorFamily::InverseGaussian,
            alpha_i: 40.0,
            beta_i: 1.0,
            alpha_sigma: 40f64.sqrt(),
            beta_sigma: 1.0,
            alpha_delta: 0.01,
            beta_delta: 0.1,
            nu: 0.25,
            gamma: 2.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            ("alpha_i", self.alpha_i),
            ("beta_i", self.beta_i),
            ("alpha_sigma", self.alpha_sigma),
            ("beta_sigma", self.beta_sigma),
            ("alpha_delta", self.alpha_delta),
            ("beta_delta", self.beta_delta),
            ("nu", self.nu),
            ("gamma", self.gamma),
        ];
        for (name, v) in vals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("prior parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// log prior of ln I (Jacobian included) and its derivative.
    #[inline]
    pub fn log_current(&self, u: f64) -> (f64, f64) {
        log_positive(self.family, self.alpha_i, self.beta_i, u)
    }

    #[inline]
    pub fn log_sigma(&self, u: f64) -> (f64, f64) {
        log_positive(self.family, self.alpha_sigma, self.beta_sigma, u)
    }

    /// log Gamma(alpha_delta, beta_delta) density at delta.
    pub fn log_delta(&self, delta: f64) -> f64 {
        log_gamma_pdf(delta, self.alpha_delta, self.beta_delta)
    }

    pub fn sample_current<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_positive(self.family, self.alpha_i, self.beta_i, rng)
    }

    pub fn sample_sigma<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_positive(self.family, self.alpha_sigma, self.beta_sigma, rng)
    }

    pub fn sample_delta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.alpha_delta, 1.0 / self.beta_delta).expect("validated").sample(rng)
    }

    /// Draws (tau, aux) from the half-t prior representation.
    pub fn sample_tau<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let aux = sample_inv_gamma(0.5, 1.0 / (self.gamma * self.gamma), rng);
        let tau = sample_inv_gamma(0.5 * self.nu, self.nu / aux, rng);
        (tau, aux)
    }
}

/// log density in u = ln x (including the Jacobian e^u) and d/du.
#[inline]
fn log_positive(family: PriorFamily, alpha: f64, beta: f64, u: f64) -> (f64, f64) {
    let x = u.exp();
    match family {
        PriorFamily::InverseGaussian => {
            let (m, lam) = (alpha, beta);
            let v = 0.5 * (lam / (2.0 * std::f64::consts::PI)).ln() - 1.5 * u - lam * (x - m).powi(2) / (2.0 * m * m * x) + u;
            let g = -0.5 - lam * (x * x - m * m) / (2.0 * m * m * x);
            (v, g)
        }
        PriorFamily::InverseGamma => {
            let v = alpha * beta.ln() - ln_gamma(alpha) - (alpha + 1.0) * u - beta / x + u;
            (v, -alpha + beta / x)
        }
    }
}

fn sample_positive<R: Rng + ?Sized>(family: PriorFamily, alpha: f64, beta: f64, rng: &mut R) -> f64 {
    match family {
        PriorFamily::InverseGaussian => sample_ig(alpha, beta, rng),
        PriorFamily::InverseGamma => sample_inv_gamma(alpha, beta, rng),
    }
}

pub fn log_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        return if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            rate.ln()
        } else {
            f64::NEG_INFINITY
        };
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// InvGamma(shape, scale) draw.
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

/// Conditionally conjugate update of (tau, aux) given the coefficient vector.
pub fn gibbs_tau<R: Rng + ?Sized>(phi: &[f64], aux: f64, prior: &PriorConfig, rng: &mut R) -> (f64, f64) {
    let p = phi.len() as f64;
    let ss: f64 = phi.iter().map(|v| v * v).sum();
    let tau = sample_inv_gamma(0.5 * (prior.nu + p), prior.nu / aux + 0.5 * ss, rng);
    let aux = sample_inv_gamma(0.5 * (prior.nu + 1.0), prior.nu / tau + 1.0 / (prior.gamma * prior.gamma), rng);
    (tau, aux)
}
