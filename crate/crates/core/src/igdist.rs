//! Inverse-Gaussian ISI densities and the competition model's joint
//! (ISI, label) densities.
//!
//! With the threshold gap fixed at 1, an ISI started at rate `r` with noise
//! `sigma` is inverse-Gaussian with mean `1/r` and shape `1/sigma^2`. The
//! low-level functions below work on `(rate, sigma)` directly; the
//! parameter-level wrappers resolve the rate through the spline basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::special::{log1m_exp, log_add_exp, log_ndtr, log_normal_pdf};
use crate::splines::{dot, Basis};
use crate::train::{Label, PreparedTrain, SpikeTrain};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_HALF: f64 = -std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusParams {
    pub current: f64,
    pub sigma: f64,
    pub phi: Vec<f64>,
}

impl StimulusParams {
    pub fn homogeneous(current: f64, sigma: f64, dim: usize) -> Self {
        Self { current, sigma, phi: vec![0.0; dim] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.current > 0.0 && self.current.is_finite()) {
            return Err(Error::InvalidParameter(format!("I must be positive, got {}", self.current)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("spline coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Rate at previous-spike time `s`.
    pub fn rate(&self, basis: &Basis, s: f64) -> Result<f64> {
        basis.current(self.current, &self.phi, s)
    }

    /// Rate for a precomputed basis row.
    #[inline]
    pub fn rate_row(&self, row: &[f64]) -> f64 {
        self.current * dot(&self.phi, row).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionParams {
    pub a: StimulusParams,
    pub b: StimulusParams,
    pub delta: f64,
}

impl CompetitionParams {
    #[inline]
    pub fn get(&self, l: Label) -> &StimulusParams {
        match l {
            Label::A => &self.a,
            Label::B => &self.b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.a.validate()?;
        self.b.validate()?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }
}

/// log density of IG(mean 1/rate, shape 1/sigma^2) at `x`; `-inf` for `x <= 0`.
#[inline]
pub fn ig_log_pdf(x: f64, rate: f64, sigma: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let u = 1.0 - rate * x;
    -sigma.ln() - 0.5 * (LN_2PI + 3.0 * x.ln()) - u * u / (2.0 * sigma * sigma * x)
}

/// log density and its derivatives with respect to `ln rate` and `ln sigma`.
#[inline]
pub fn ig_log_pdf_grad(x: f64, rate: f64, sigma: f64) -> (f64, f64, f64) {
    if !(x > 0.0) {
        return (f64::NEG_INFINITY, 0.0, 0.0);
    }
    let s2 = sigma * sigma;
    let u = 1.0 - rate * x;
    let q = u * u / (s2 * x);
    let v = -sigma.ln() - 0.5 * (LN_2PI + 3.0 * x.ln()) - 0.5 * q;
    (v, rate * u / s2, -1.0 + q)
}

struct SfParts {
    log_s: f64,
    /// ln(e^c Phi(b)), the second CDF term
    log_f2: f64,
    c: f64,
    a: f64,
    k: f64,
}

#[inline]
fn sf_parts(y: f64, rate: f64, sigma: f64) -> SfParts {
    let sq = sigma * y.sqrt();
    let k = 1.0 / sq;
    let a = (rate * y - 1.0) * k;
    let b = -(rate * y + 1.0) * k;
    let c = 2.0 * rate / (sigma * sigma);
    let log_f1 = log_ndtr(a);
    let log_f2 = c + log_ndtr(b);
    let log_f = log_add_exp(log_f1, log_f2);
    let log_s = if log_f < LN_HALF {
        (-log_f.exp()).ln_1p()
    } else {
        // 1 - F = Phi(-a) - e^c Phi(b)
        let lq = log_ndtr(-a);
        let d = log_f2 - lq;
        if d >= 0.0 {
            f64::NEG_INFINITY
        } else {
            lq + log1m_exp(d)
        }
    };
    SfParts { log_s, log_f2, c, a, k }
}

/// log survival of IG(mean 1/rate, shape 1/sigma^2) at `y`; 0 for `y <= 0`.
#[inline]
pub fn ig_log_sf(y: f64, rate: f64, sigma: f64) -> f64 {
    if !(y > 0.0) {
        return 0.0;
    }
    if y == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    sf_parts(y, rate, sigma).log_s
}

/// log survival and its derivatives with respect to `ln rate` and `ln sigma`.
#[inline]
pub fn ig_log_sf_grad(y: f64, rate: f64, sigma: f64) -> (f64, f64, f64) {
    if !(y > 0.0) {
        return (0.0, 0.0, 0.0);
    }
    let p = sf_parts(y, rate, sigma);
    if p.log_s == f64::NEG_INFINITY {
        return (p.log_s, 0.0, 0.0);
    }
    let r2 = (p.log_f2 - p.log_s).exp();
    let r1 = (log_normal_pdf(p.a) - p.log_s).exp();
    let d_eta = -p.c * r2;
    let d_omega = -(2.0 * p.k * r1 - 2.0 * p.c * r2);
    (p.log_s, d_eta, d_omega)
}

/// Rates and noise of both racers for one race.
#[derive(Debug, Clone, Copy)]
pub struct Racers {
    pub rate: [f64; 2],
    pub sigma: [f64; 2],
}

impl Racers {
    pub fn at(cp: &CompetitionParams, basis: &Basis, s: f64) -> Result<Self> {
        Ok(Self {
            rate: [cp.a.rate(basis, s)?, cp.b.rate(basis, s)?],
            sigma: [cp.a.sigma, cp.b.sigma],
        })
    }

    /// log f_S(x - delta 1{prev = S^C}) + log S_{S^C}(x - delta 1{prev = S}).
    pub fn log_joint(&self, x: f64, label: Label, prev: Option<Label>, delta: f64) -> f64 {
        let w = label.index();
        let l = label.complement().index();
        let (shift_w, shift_l) = match prev {
            None => (0.0, 0.0),
            Some(p) if p == label => (0.0, delta),
            Some(_) => {
                if x <= delta {
                    return f64::NEG_INFINITY;
                }
                (delta, 0.0)
            }
        };
        ig_log_pdf(x - shift_w, self.rate[w], self.sigma[w])
            + ig_log_sf(x - shift_l, self.rate[l], self.sigma[l])
    }

    /// Probability that neither racer fires within `h` after a spike won by `label`.
    pub fn log_censor(&self, h: f64, label: Label, delta: f64) -> f64 {
        let w = label.index();
        let l = label.complement().index();
        ig_log_sf(h, self.rate[w], self.sigma[w]) + ig_log_sf(h - delta, self.rate[l], self.sigma[l])
    }
}

fn check_isi(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveIsi(x))
    }
}

pub fn log_ig_pdf(p: &StimulusParams, x: f64, s_prev: f64, basis: &Basis) -> Result<f64> {
    check_isi(x)?;
    Ok(ig_log_pdf(x, p.rate(basis, s_prev)?, p.sigma))
}

pub fn log_ig_sf(p: &StimulusParams, x: f64, s_prev: f64, basis: &Basis) -> Result<f64> {
    Ok(ig_log_sf(x, p.rate(basis, s_prev)?, p.sigma))
}

pub fn log_joint_first(cp: &CompetitionParams, x: f64, label: Label, basis: &Basis) -> Result<f64> {
    check_isi(x)?;
    Ok(Racers::at(cp, basis, 0.0)?.log_joint(x, label, None, cp.delta))
}

pub fn log_joint_step(
    cp: &CompetitionParams,
    x: f64,
    label: Label,
    prev: Label,
    s_prev: f64,
    basis: &Basis,
) -> Result<f64> {
    check_isi(x)?;
    Ok(Racers::at(cp, basis, s_prev)?.log_joint(x, label, Some(prev), cp.delta))
}

/// Joint density of the last spike together with the absence of any further
/// spike before `t_end`. `prev = None` for a single-spike train.
pub fn log_joint_last(
    cp: &CompetitionParams,
    x: f64,
    label: Label,
    prev: Option<Label>,
    s_prev: f64,
    t_end: f64,
    basis: &Basis,
) -> Result<f64> {
    check_isi(x)?;
    let s = s_prev + x;
    if s > t_end {
        return Err(Error::InvalidParameter(format!("last spike at {s} lies beyond the window end {t_end}")));
    }
    let spike = Racers::at(cp, basis, s_prev)?.log_joint(x, label, prev, cp.delta);
    let censor = Racers::at(cp, basis, s)?.log_censor(t_end - s, label, cp.delta);
    Ok(spike + censor)
}

/// P(L_j = label | L_{j-1} = prev) by quadrature of the joint step density.
pub fn race_win_probability(
    cp: &CompetitionParams,
    label: Label,
    prev: Option<Label>,
    s_prev: f64,
    basis: &Basis,
) -> Result<f64> {
    let racers = Racers::at(cp, basis, s_prev)?;
    let delta = if prev.is_some() { cp.delta } else { 0.0 };
    let mut points = vec![0.0];
    if delta > 0.0 {
        points.push(delta);
    }
    // Scale-aware breakpoints so narrow peaks are not skipped by the first rule.
    for s in Label::BOTH {
        let shift = match prev {
            Some(p) if p != s => delta,
            _ => 0.0,
        };
        let mu = 1.0 / racers.rate[s.index()];
        for f in [0.5, 1.0, 2.0] {
            points.push(shift + f * mu);
        }
    }
    let min_rate = racers.rate[0].min(racers.rate[1]);
    points.push(10.0 / min_rate);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let tol = 1e-8 / (points.len() as f64 + 1.0);
    let f = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        racers.log_joint(x, label, prev, delta).exp()
    };
    let mut total = 0.0;
    for w in points.windows(2) {
        total += quadrature::integrate(f, w[0], w[1], tol)?.value;
    }
    total += quadrature::integrate_to_infinity(f, *points.last().expect("nonempty"), tol)?.value;
    Ok(total)
}

/// Gradient of a log likelihood with respect to one stimulus' unconstrained
/// parameters (ln I, ln sigma, phi).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub log_current: f64,
    pub log_sigma: f64,
    pub phi: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros(dim: usize) -> Self {
        Self { log_current: 0.0, log_sigma: 0.0, phi: vec![0.0; dim] }
    }

    /// Adds the contribution of a term with derivatives (d/d ln rate, d/d ln sigma)
    /// whose rate used basis row `row`.
    #[inline]
    pub fn push(&mut self, d_eta: f64, d_omega: f64, row: &[f64]) {
        self.log_current += d_eta;
        self.log_sigma += d_omega;
        for (g, b) in self.phi.iter_mut().zip(row) {
            *g += d_eta * b;
        }
    }
}

/// IIGPP log likelihood of a prepared train: ISI densities times the
/// probability of no further spike before the window end.
pub fn iigpp_loglik(p: &StimulusParams, t: &PreparedTrain) -> f64 {
    let mut v = 0.0;
    for j in 0..t.len() {
        v += ig_log_pdf(t.isi[j], p.rate_row(t.row(j)), p.sigma);
    }
    v + ig_log_sf(t.horizon, p.rate_row(&t.last_row), p.sigma)
}

/// As [`iigpp_loglik`], accumulating the gradient into `g`.
pub fn iigpp_loglik_grad(p: &StimulusParams, t: &PreparedTrain, g: &mut ParamGrad) -> f64 {
    let mut v = 0.0;
    for j in 0..t.len() {
        let row = t.row(j);
        let (lv, de, dw) = ig_log_pdf_grad(t.isi[j], p.rate_row(row), p.sigma);
        v += lv;
        g.push(de, dw, row);
    }
    let (lv, de, dw) = ig_log_sf_grad(t.horizon, p.rate_row(&t.last_row), p.sigma);
    g.push(de, dw, &t.last_row);
    v + lv
}

pub fn iigpp_train_loglik(p: &StimulusParams, train: &SpikeTrain, basis: &Basis) -> Result<f64> {
    p.validate()?;
    Ok(iigpp_loglik(p, &PreparedTrain::new(train, basis)?))
}
