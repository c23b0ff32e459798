//! Block-conditional log posteriors with analytic gradients in the
//! unconstrained space (ln I, ln sigma, phi).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::igdist::{ig_log_pdf_grad, ig_log_sf_grad, iigpp_loglik, iigpp_loglik_grad, ParamGrad, StimulusParams};
use crate::mcmc::priors::PriorConfig;
use crate::train::{Label, PreparedTrain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    /// (ln I_k, ln sigma_k) for every parameter set
    Is,
    /// spline coefficients of every parameter set
    Phi,
}

/// Who explains a train: one parameter set (IIGPP likelihood) or the race
/// between sets 0 and 1 (competition likelihood).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Set(usize),
    Race,
}

/// Prepared trains in their global order, each tagged with its owner.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub n_sets: usize,
    pub dim: usize,
    pub trains: Vec<PreparedTrain>,
    pub owners: Vec<Owner>,
}

impl ModelData {
    pub fn race_indices(&self) -> Vec<usize> {
        self.owners.iter().enumerate().filter(|(_, o)| **o == Owner::Race).map(|(i, _)| i).collect()
    }

    pub fn has_race(&self) -> bool {
        self.owners.contains(&Owner::Race)
    }
}

/// Continuous parameters of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub sets: Vec<StimulusParams>,
    pub tau: Vec<f64>,
    pub aux: Vec<f64>,
    pub delta: f64,
}

impl Theta {
    pub fn block_dim(&self, block: Block) -> usize {
        match block {
            Block::Is => 2 * self.sets.len(),
            Block::Phi => self.sets.iter().map(|s| s.phi.len()).sum(),
        }
    }

    pub fn block_vector(&self, block: Block) -> Vec<f64> {
        match block {
            Block::Is => self
                .sets
                .iter()
                .map(|s| s.current.ln())
                .chain(self.sets.iter().map(|s| s.sigma.ln()))
                .collect(),
            Block::Phi => self.sets.iter().flat_map(|s| s.phi.iter().copied()).collect(),
        }
    }

    pub fn set_block(&mut self, block: Block, q: &[f64]) {
        let k = self.sets.len();
        match block {
            Block::Is => {
                for (i, s) in self.sets.iter_mut().enumerate() {
                    s.current = q[i].exp();
                    s.sigma = q[k + i].exp();
                }
            }
            Block::Phi => {
                let mut off = 0;
                for s in self.sets.iter_mut() {
                    let p = s.phi.len();
                    s.phi.copy_from_slice(&q[off..off + p]);
                    off += p;
                }
            }
        }
    }
}

/// Label-conditional competition log likelihood of one train, accumulating
/// gradients for the A (index 0) and B (index 1) parameter sets.
pub fn race_loglik_grad(
    a: &StimulusParams,
    b: &StimulusParams,
    delta: f64,
    t: &PreparedTrain,
    labels: &[Label],
    grads: &mut [ParamGrad; 2],
) -> f64 {
    let params = [a, b];
    let mut v = 0.0;
    let mut prev: Option<Label> = None;
    for j in 0..t.len() {
        let row = t.row(j);
        let x = t.isi[j];
        let w = labels[j];
        let l = w.complement();
        let (shift_w, shift_l) = match prev {
            None => (0.0, 0.0),
            Some(p) if p == w => (0.0, delta),
            Some(_) => (delta, 0.0),
        };
        let pw = params[w.index()];
        let pl = params[l.index()];
        let (fv, fe, fw) = ig_log_pdf_grad(x - shift_w, pw.rate_row(row), pw.sigma);
        let (sv, se, sw) = ig_log_sf_grad(x - shift_l, pl.rate_row(row), pl.sigma);
        v += fv + sv;
        grads[w.index()].push(fe, fw, row);
        grads[l.index()].push(se, sw, row);
        prev = Some(w);
    }
    let row = &t.last_row;
    match prev {
        None => {
            for s in Label::BOTH {
                let p = params[s.index()];
                let (sv, se, sw) = ig_log_sf_grad(t.horizon, p.rate_row(row), p.sigma);
                v += sv;
                grads[s.index()].push(se, sw, row);
            }
        }
        Some(w) => {
            let l = w.complement();
            let pw = params[w.index()];
            let pl = params[l.index()];
            let (sv, se, sw) = ig_log_sf_grad(t.horizon, pw.rate_row(row), pw.sigma);
            v += sv;
            grads[w.index()].push(se, sw, row);
            let (sv, se, sw) = ig_log_sf_grad(t.horizon - delta, pl.rate_row(row), pl.sigma);
            v += sv;
            grads[l.index()].push(se, sw, row);
        }
    }
    v
}

enum TermGrad {
    One(usize, ParamGrad),
    Two([ParamGrad; 2]),
}

/// Data log likelihood (labels fixed for race trains) and its gradient per set.
pub fn data_loglik_grad(data: &ModelData, theta: &Theta, labels: &[Vec<Label>]) -> (f64, Vec<ParamGrad>) {
    let race_pos = race_positions(data);
    let terms: Vec<(f64, TermGrad)> = data
        .trains
        .par_iter()
        .zip(data.owners.par_iter())
        .enumerate()
        .map(|(i, (t, owner))| match *owner {
            Owner::Set(k) => {
                let mut g = ParamGrad::zeros(data.dim);
                let v = iigpp_loglik_grad(&theta.sets[k], t, &mut g);
                (v, TermGrad::One(k, g))
            }
            Owner::Race => {
                let mut g = [ParamGrad::zeros(data.dim), ParamGrad::zeros(data.dim)];
                let l = &labels[race_pos[i]];
                let v = race_loglik_grad(&theta.sets[0], &theta.sets[1], theta.delta, t, l, &mut g);
                (v, TermGrad::Two(g))
            }
        })
        .collect();
    let mut grads = vec![ParamGrad::zeros(data.dim); data.n_sets];
    let mut total = 0.0;
    for (v, g) in terms {
        total += v;
        match g {
            TermGrad::One(k, g) => add_into(&mut grads[k], &g),
            TermGrad::Two([ga, gb]) => {
                add_into(&mut grads[0], &ga);
                add_into(&mut grads[1], &gb);
            }
        }
    }
    (total, grads)
}

fn add_into(acc: &mut ParamGrad, g: &ParamGrad) {
    acc.log_current += g.log_current;
    acc.log_sigma += g.log_sigma;
    for (a, b) in acc.phi.iter_mut().zip(&g.phi) {
        *a += b;
    }
}

/// Index of each train among the race trains (meaningless for other owners).
pub fn race_positions(data: &ModelData) -> Vec<usize> {
    let mut k = 0;
    data.owners
        .iter()
        .map(|o| {
            let pos = k;
            if *o == Owner::Race {
                k += 1;
            }
            pos
        })
        .collect()
}

/// Log conditional posterior of one block (up to a constant) and its gradient
/// with respect to that block's unconstrained coordinates.
pub fn log_posterior_and_grad(
    data: &ModelData,
    theta: &Theta,
    labels: &[Vec<Label>],
    prior: &PriorConfig,
    block: Block,
) -> (f64, Vec<f64>) {
    let (ll, grads) = data_loglik_grad(data, theta, labels);
    let k = theta.sets.len();
    let mut value = ll;
    let mut out = Vec::with_capacity(theta.block_dim(block));
    match block {
        Block::Is => {
            let mut gs = Vec::with_capacity(k);
            for (s, g) in theta.sets.iter().zip(&grads) {
                let (pv, pg) = prior.log_current(s.current.ln());
                value += pv;
                out.push(g.log_current + pg);
                let (pv, pg) = prior.log_sigma(s.sigma.ln());
                value += pv;
                gs.push(g.log_sigma + pg);
            }
            out.extend(gs);
        }
        Block::Phi => {
            for ((s, g), &tau) in theta.sets.iter().zip(&grads).zip(&theta.tau) {
                for (&phi, &d) in s.phi.iter().zip(&g.phi) {
                    value -= phi * phi / (2.0 * tau);
                    out.push(d - phi / tau);
                }
            }
        }
    }
    (value, out)
}

/// Per-train log likelihoods at the current state. Race trains take their
/// values from `race_ll` (marginal over labels, in race order).
pub fn train_logliks(data: &ModelData, theta: &Theta, race_ll: &[f64]) -> Vec<f64> {
    let race_pos = race_positions(data);
    data.trains
        .par_iter()
        .zip(data.owners.par_iter())
        .enumerate()
        .map(|(i, (t, owner))| match *owner {
            Owner::Set(k) => iigpp_loglik(&theta.sets[k], t),
            Owner::Race => race_ll[race_pos[i]],
        })
        .collect()
}

pub fn check_finite(value: f64, grad: &[f64], what: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Numerical(format!("{what}: log posterior is {value}")));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("{what}: gradient component {i} is {}", grad[i])));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::RaceTrain;
    use crate::igdist::{CompetitionParams, Racers};
    use crate::splines::{Basis, BasisConfig};
    use crate::train::SpikeTrain;

    #[test]
    fn race_loglik_matches_joint_densities() {
        let basis = Basis::new(&BasisConfig::default()).unwrap();
        let cp = CompetitionParams {
            a: StimulusParams { current: 40.0, sigma: 6.0, phi: vec![0.1, 0.2, -0.1, 0.0, 0.3, -0.2] },
            b: StimulusParams { current: 70.0, sigma: 8.0, phi: vec![0.0, -0.3, 0.1, 0.2, 0.0, 0.1] },
            delta: 0.01,
        };
        let t = SpikeTrain::new(vec![0.02, 0.05, 0.058, 0.3, 0.95], 1.0).unwrap();
        let labels = [Label::A, Label::B, Label::B, Label::A, Label::A];
        let pt = PreparedTrain::new(&t, &basis).unwrap();
        let mut g = [ParamGrad::zeros(6), ParamGrad::zeros(6)];
        let got = race_loglik_grad(&cp.a, &cp.b, cp.delta, &pt, &labels, &mut g);
        let mut want = 0.0;
        let mut prev = None;
        let mut s = 0.0;
        for (j, &x) in t.isis().iter().enumerate() {
            want += Racers::at(&cp, &basis, s).unwrap().log_joint(x, labels[j], prev, cp.delta);
            prev = Some(labels[j]);
            s += x;
        }
        want += Racers::at(&cp, &basis, s).unwrap().log_censor(1.0 - s, labels[4], cp.delta);
        assert!((got - want).abs() < 1e-11);
        // empty train equals the race cache's censoring term
        let e = PreparedTrain::new(&SpikeTrain::empty(1.0), &basis).unwrap();
        let mut g = [ParamGrad::zeros(6), ParamGrad::zeros(6)];
        let v = race_loglik_grad(&cp.a, &cp.b, cp.delta, &e, &[], &mut g);
        assert!((v - RaceTrain::new(&cp.a, &cp.b, &e).empty_loglik()).abs() < 1e-14);
    }
}
