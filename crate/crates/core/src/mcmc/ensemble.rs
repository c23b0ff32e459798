//! Joint update of the delay and all label sequences: importance-weighted
//! selection among the current delay and fresh proposals, followed by exact
//! backward sampling under the selected delay.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{backward_sample, FilterState, RaceTrain};
use crate::mcmc::priors::{log_gamma_pdf, PriorConfig};
use crate::special::{log_add_exp, log_sum_exp, LN_SQRT_2PI};
use crate::train::Label;

/// q(delta) = alpha_mix Gamma(prior) + (1 - alpha_mix) LogNormal(psi).
#[derive(Debug, Clone, Copy)]
pub struct DeltaProposal {
    pub alpha_mix: f64,
    pub psi_mean: f64,
    pub psi_var: f64,
    pub prior_shape: f64,
    pub prior_rate: f64,
}

impl DeltaProposal {
    pub fn new(prior: &PriorConfig, alpha_mix: f64, psi: (f64, f64)) -> Self {
        Self {
            alpha_mix,
            psi_mean: psi.0,
            psi_var: psi.1,
            prior_shape: prior.alpha_delta,
            prior_rate: prior.beta_delta,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.alpha_mix {
            Gamma::new(self.prior_shape, 1.0 / self.prior_rate).expect("validated").sample(rng)
        } else {
            let z: f64 = StandardNormal.sample(rng);
            (self.psi_mean + self.psi_var.sqrt() * z).exp()
        }
    }

    fn log_lognormal(&self, d: f64) -> f64 {
        if !(d > 0.0) {
            return f64::NEG_INFINITY;
        }
        let l = d.ln();
        -l - LN_SQRT_2PI - 0.5 * self.psi_var.ln() - (l - self.psi_mean).powi(2) / (2.0 * self.psi_var)
    }

    pub fn log_prior(&self, d: f64) -> f64 {
        log_gamma_pdf(d, self.prior_shape, self.prior_rate)
    }

    pub fn log_density(&self, d: f64) -> f64 {
        log_add_exp(self.alpha_mix.ln() + self.log_prior(d), (1.0 - self.alpha_mix).ln() + self.log_lognormal(d))
    }

    /// log(pi(d) / q(d)), evaluated without forming either density when the
    /// prior is unbounded at zero.
    pub fn log_prior_over_proposal(&self, d: f64) -> f64 {
        if !(d > 0.0) {
            return -self.alpha_mix.ln();
        }
        let lp = self.log_prior(d);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        -log_add_exp(self.alpha_mix.ln(), (1.0 - self.alpha_mix).ln() + self.log_lognormal(d) - lp)
    }
}

/// Normalized log selection probabilities for the candidates.
pub fn ensemble_weights(candidates: &[f64], loglik: &[f64], q: &DeltaProposal) -> Result<Vec<f64>> {
    let w: Vec<f64> = candidates
        .iter()
        .zip(loglik)
        .map(|(&d, &ll)| {
            let v = ll + q.log_prior_over_proposal(d);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        })
        .collect();
    let c = log_sum_exp(&w);
    if !c.is_finite() {
        return Err(Error::Invariant(format!("all ensemble candidate weights are {c}")));
    }
    Ok(w.iter().map(|v| v - c).collect())
}

pub fn pick<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.iter().rposition(|lp| lp.is_finite()).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub delta: f64,
    pub labels: Vec<Vec<Label>>,
    /// Marginal log likelihood of each race train under the selected delay.
    pub train_loglik: Vec<f64>,
    pub chosen: usize,
    pub candidates: Vec<f64>,
}

/// Filters every train under `delta`; empty trains yield `None`.
pub fn filter_all(races: &[RaceTrain], delta: f64) -> Vec<(f64, Option<FilterState>)> {
    races
        .par_iter()
        .map(|r| {
            if r.is_empty() {
                (r.empty_loglik(), None)
            } else {
                let fs = r.filter(delta).expect("nonempty train");
                (fs.log_marginal(), Some(fs))
            }
        })
        .collect()
}

/// One ensemble sweep. `m` fresh candidates are drawn in addition to the
/// current delay.
pub fn ensemble_delta_labels<R: Rng + ?Sized>(
    races: &[RaceTrain],
    current: f64,
    q: &DeltaProposal,
    m: usize,
    rng: &mut R,
) -> Result<EnsembleOutcome> {
    let mut candidates = Vec::with_capacity(m + 1);
    candidates.push(current);
    for _ in 0..m {
        candidates.push(q.sample(rng));
    }
    let filtered: Vec<Vec<(f64, Option<FilterState>)>> =
        candidates.iter().map(|&d| filter_all(races, d)).collect();
    let totals: Vec<f64> = filtered.iter().map(|f| f.iter().map(|(ll, _)| ll).sum()).collect();
    let probs = ensemble_weights(&candidates, &totals, q)?;
    let chosen = pick(&probs, rng);
    let states = &filtered[chosen];
    let mut labels = Vec::with_capacity(races.len());
    for (i, (_, fs)) in states.iter().enumerate() {
        labels.push(match fs {
            Some(fs) => backward_sample(fs, i, rng)?,
            None => Vec::new(),
        });
    }
    Ok(EnsembleOutcome {
        delta: candidates[chosen],
        labels,
        train_loglik: states.iter().map(|(ll, _)| *ll).collect(),
        chosen,
        candidates,
    })
}
