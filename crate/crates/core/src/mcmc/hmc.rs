//! Jittered HMC with a dense mass matrix, plus the adaptation helpers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Energy error beyond which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct BlockTuning {
    pub step: f64,
    /// M^{-1}
    pub inv_mass: DMatrix<f64>,
    /// lower Cholesky factor of M, for drawing momenta
    pub chol_mass: DMatrix<f64>,
}

impl BlockTuning {
    pub fn identity(dim: usize, step: f64) -> Self {
        Self { step, inv_mass: DMatrix::identity(dim, dim), chol_mass: DMatrix::identity(dim, dim) }
    }

    /// Tuning with mass matrix `mass`; `None` if it is not SPD.
    pub fn with_mass(mass: &DMatrix<f64>, step: f64) -> Option<Self> {
        let chol = mass.clone().cholesky()?;
        let inv_mass = chol.inverse();
        Some(Self { step, inv_mass, chol_mass: chol.l() })
    }

    /// Tuning with inverse mass (e.g. a posterior covariance).
    pub fn with_inv_mass(inv_mass: &DMatrix<f64>, step: f64) -> Option<Self> {
        let mass = inv_mass.clone().cholesky()?.inverse();
        Self::with_mass(&(0.5 * (&mass + mass.transpose())), step)
    }

    pub fn dim(&self) -> usize {
        self.inv_mass.nrows()
    }

    /// M = L L^T
    pub fn mass(&self) -> DMatrix<f64> {
        &self.chol_mass * self.chol_mass.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct HmcOutcome {
    pub q: Vec<f64>,
    pub logp: f64,
    pub accept_prob: f64,
    pub accepted: bool,
    pub divergent: bool,
}

fn kinetic(p: &DVector<f64>, inv_mass: &DMatrix<f64>) -> f64 {
    0.5 * p.dot(&(inv_mass * p))
}

/// One HMC transition from `q0`. The step size is drawn from
/// U[0.9 eps, 1.1 eps] and the number of leapfrog steps from U{1..2L}.
pub fn hmc_transition<F, R>(q0: &[f64], mut logp: F, tuning: &BlockTuning, base_steps: usize, rng: &mut R) -> HmcOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    R: Rng + ?Sized,
{
    let n = q0.len();
    let eps = tuning.step * rng.random_range(0.9..=1.1);
    let steps = rng.random_range(1..=2 * base_steps.max(1));
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
    let mut p = &tuning.chol_mass * z;
    let (lp0, g0) = logp(q0);
    let h0 = -lp0 + kinetic(&p, &tuning.inv_mass);
    let reject = |prob: f64, divergent: bool| HmcOutcome {
        q: q0.to_vec(),
        logp: lp0,
        accept_prob: prob,
        accepted: false,
        divergent,
    };
    if !h0.is_finite() {
        return reject(0.0, true);
    }
    let mut q = DVector::from_column_slice(q0);
    let mut g = DVector::from_vec(g0);
    let mut lp = lp0;
    p += 0.5 * eps * &g;
    for s in 0..steps {
        q += eps * (&tuning.inv_mass * &p);
        let (l, gr) = logp(q.as_slice());
        lp = l;
        g = DVector::from_vec(gr);
        if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return reject(0.0, true);
        }
        let scale = if s + 1 == steps { 0.5 } else { 1.0 };
        p += scale * eps * &g;
    }
    let h1 = -lp + kinetic(&p, &tuning.inv_mass);
    let dh = h1 - h0;
    if !dh.is_finite() || dh.abs() > DIVERGENCE_THRESHOLD {
        return reject(0.0, true);
    }
    let accept_prob = (-dh).exp().min(1.0);
    if rng.random::<f64>() < accept_prob {
        HmcOutcome { q: q.as_slice().to_vec(), logp: lp, accept_prob, accepted: true, divergent: false }
    } else {
        reject(accept_prob, false)
    }
}

/// Robbins–Monro update of log step size toward the target acceptance.
pub fn robbins_monro(step: f64, accept_prob: f64, target: f64, rate: f64) -> f64 {
    (step.ln() + rate * (accept_prob - target)).exp()
}

/// Mass matrix (SampleCov + reg I)^{-1} from a window of draws; `None` when the
/// window is too short or the regularized covariance is not SPD.
pub fn adapt_mass(history: &[Vec<f64>], reg: f64) -> Option<DMatrix<f64>> {
    let n = history.len();
    let d = history.first()?.len();
    if n < 2 {
        return None;
    }
    let mut mean = vec![0.0; d];
    for h in history {
        for (m, v) in mean.iter_mut().zip(h) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for h in history {
        for i in 0..d {
            let di = h[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (h[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
        cov[(i, i)] += reg;
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mass = cov.cholesky()?.inverse();
    Some(0.5 * (&mass + mass.transpose()))
}

/// Moment-matched log-normal parameters (mean, variance of ln delta).
pub fn adapt_psi_delta(deltas: &[f64]) -> (f64, f64) {
    const VAR_FLOOR: f64 = 1e-6;
    let logs: Vec<f64> = deltas.iter().map(|d| d.max(1e-300).ln()).collect();
    let n = logs.len().max(1) as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = if logs.len() > 1 {
        logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.max(VAR_FLOOR))
}

/// Doubles or halves the step until the one-step acceptance probability
/// crosses 0.5, then halves further until a trajectory of the longest jittered
/// length (2 * base_steps) is also accepted with probability at least 0.5.
/// The one-step test alone misses leapfrog instability along stiff directions.
pub fn find_reasonable_step<F, R>(q0: &[f64], mut logp: F, tuning: &BlockTuning, base_steps: usize, rng: &mut R) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    R: Rng + ?Sized,
{
    let n = q0.len();
    let (lp0, g0) = logp(q0);
    if !lp0.is_finite() {
        return tuning.step;
    }
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
    let p0 = &tuning.chol_mass * z;
    let k0 = kinetic(&p0, &tuning.inv_mass);
    let g0 = DVector::from_vec(g0);
    let log_ratio = |eps: f64, logp: &mut F| {
        let mut p = p0.clone() + 0.5 * eps * &g0;
        let q = DVector::from_column_slice(q0) + eps * (&tuning.inv_mass * &p);
        let (lp, g) = logp(q.as_slice());
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        p += 0.5 * eps * DVector::from_vec(g);
        let r = lp - kinetic(&p, &tuning.inv_mass) - lp0 + k0;
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    };
    let mut eps = tuning.step;
    let up = log_ratio(eps, &mut logp) > 0.5f64.ln();
    for _ in 0..60 {
        let next = if up { eps * 2.0 } else { eps * 0.5 };
        let r = log_ratio(next, &mut logp);
        if up && r <= 0.5f64.ln() {
            break;
        }
        eps = next;
        if !up && r > 0.5f64.ln() {
            break;
        }
    }
    let steps = 2 * base_steps.max(1);
    for _ in 0..60 {
        if trajectory_log_ratio(q0, lp0, k0, &g0, &p0, eps, steps, tuning, &mut logp) > 0.5f64.ln() {
            break;
        }
        eps *= 0.5;
    }
    eps
}

#[allow(clippy::too_many_arguments)]
fn trajectory_log_ratio<F>(
    q0: &[f64],
    lp0: f64,
    k0: f64,
    g0: &DVector<f64>,
    p0: &DVector<f64>,
    eps: f64,
    steps: usize,
    tuning: &BlockTuning,
    logp: &mut F,
) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut q = DVector::from_column_slice(q0);
    let mut p = p0 + 0.5 * eps * g0;
    let mut lp = lp0;
    for s in 0..steps {
        q += eps * (&tuning.inv_mass * &p);
        let (l, g) = logp(q.as_slice());
        if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        lp = l;
        let scale = if s + 1 == steps { 0.5 } else { 1.0 };
        p += scale * eps * DVector::from_vec(g);
    }
    let r = lp - kinetic(&p, &tuning.inv_mass) - lp0 + k0;
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}
