//! Independent oracles shared by the integration tests: textbook
//! inverse-Gaussian formulas in the (mean, shape) parameterization and brute
//! force enumeration over label paths.
#![allow(dead_code)]

use spikerace::igdist::{CompetitionParams, StimulusParams};
use spikerace::splines::Basis;
use spikerace::train::{Label, SpikeTrain};

/// Phi(x) = erfc(-x / sqrt 2) / 2. The statrs normal CDF is only good to
/// about 1e-10 relative, too coarse for these comparisons.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// IG(mu, lambda) density.
pub fn ig_pdf(x: f64, mu: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (lambda / (2.0 * std::f64::consts::PI * x.powi(3))).sqrt() * (-lambda * (x - mu).powi(2) / (2.0 * mu * mu * x)).exp()
}

/// IG(mu, lambda) CDF, direct formula (fine while 2 lambda / mu is moderate).
pub fn ig_cdf(x: f64, mu: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let r = (lambda / x).sqrt();
    std_normal_cdf(r * (x / mu - 1.0)) + (2.0 * lambda / mu).exp() * std_normal_cdf(-r * (x / mu + 1.0))
}

pub fn rate_at(p: &StimulusParams, basis: &Basis, s: f64) -> f64 {
    let b = basis.eval(s).unwrap();
    p.current * p.phi.iter().zip(&b).map(|(f, v)| f * v).sum::<f64>().exp()
}

/// ISI density for a process with rate `r` and noise `sigma`.
pub fn pdf_r(x: f64, r: f64, sigma: f64) -> f64 {
    ig_pdf(x, 1.0 / r, 1.0 / (sigma * sigma))
}

pub fn sf_r(y: f64, r: f64, sigma: f64) -> f64 {
    1.0 - ig_cdf(y, 1.0 / r, 1.0 / (sigma * sigma))
}

fn params(cp: &CompetitionParams, l: Label) -> &StimulusParams {
    match l {
        Label::A => &cp.a,
        Label::B => &cp.b,
    }
}

/// Joint density of (ISI x, winner w) after a spike at s_prev won by `prev`.
pub fn joint(cp: &CompetitionParams, basis: &Basis, x: f64, w: Label, prev: Option<Label>, s_prev: f64) -> f64 {
    let l = w.complement();
    let (pw, pl) = (params(cp, w), params(cp, l));
    let shift_w = if prev == Some(l) { cp.delta } else { 0.0 };
    let shift_l = if prev == Some(w) { cp.delta } else { 0.0 };
    pdf_r(x - shift_w, rate_at(pw, basis, s_prev), pw.sigma) * sf_r(x - shift_l, rate_at(pl, basis, s_prev), pl.sigma)
}

/// Probability of no further spike in the remaining window after the last spike.
pub fn censor(cp: &CompetitionParams, basis: &Basis, h: f64, last: Option<Label>, s_last: f64) -> f64 {
    match last {
        None => Label::BOTH.iter().map(|&s| sf_r(h, rate_at(params(cp, s), basis, 0.0), params(cp, s).sigma)).product(),
        Some(w) => {
            let l = w.complement();
            let (pw, pl) = (params(cp, w), params(cp, l));
            sf_r(h, rate_at(pw, basis, s_last), pw.sigma) * sf_r(h - cp.delta, rate_at(pl, basis, s_last), pl.sigma)
        }
    }
}

/// Density of the first `upto` ISIs along a label path (with censoring when
/// `upto` covers the whole train).
pub fn path_density(cp: &CompetitionParams, basis: &Basis, t: &SpikeTrain, path: &[Label], upto: usize) -> f64 {
    let mut d = 1.0;
    let mut s = 0.0;
    let mut prev = None;
    for j in 0..upto {
        let x = t.spikes[j] - s;
        d *= joint(cp, basis, x, path[j], prev, s);
        prev = Some(path[j]);
        s = t.spikes[j];
    }
    if upto == t.spikes.len() {
        d *= censor(cp, basis, t.window_end - s, prev, s);
    }
    d
}

pub fn path_from_bits(bits: usize, n: usize) -> Vec<Label> {
    (0..n).map(|j| if bits >> j & 1 == 0 { Label::A } else { Label::B }).collect()
}

pub struct Enumeration {
    /// Marginal density of the whole train.
    pub marginal: f64,
    /// P(L_j = A | x_{1:j}), the last entry conditioning on the censoring event.
    pub filtered_a: Vec<f64>,
    /// Posterior probability of each path, indexed by bit pattern (bit j set = B).
    pub posterior: Vec<f64>,
}

pub fn enumerate(cp: &CompetitionParams, basis: &Basis, t: &SpikeTrain) -> Enumeration {
    let n = t.spikes.len();
    let mut filtered_a = Vec::with_capacity(n);
    for j in 1..=n {
        let mut num = 0.0;
        let mut den = 0.0;
        for bits in 0..1usize << j {
            let path = path_from_bits(bits, j);
            let d = path_density(cp, basis, t, &path, j);
            den += d;
            if path[j - 1] == Label::A {
                num += d;
            }
        }
        filtered_a.push(num / den);
    }
    let dens: Vec<f64> = (0..1usize << n).map(|b| path_density(cp, basis, t, &path_from_bits(b, n), n)).collect();
    let marginal: f64 = dens.iter().sum();
    Enumeration { marginal, filtered_a, posterior: dens.iter().map(|d| d / marginal).collect() }
}

pub fn bits_of(path: &[Label]) -> usize {
    path.iter().enumerate().map(|(j, l)| if *l == Label::B { 1 << j } else { 0 }).sum()
}

/// Two-sample-free KS distance of a sample against a continuous CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Pearson chi-square statistic.
pub fn chi_square(observed: &[u64], expected_prob: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(expected_prob)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// KS distance of a sample against the normalized integral of `density`
/// from `lower`, integrating between consecutive order statistics.
pub fn ks_by_quadrature(sample: &mut [f64], density: impl Fn(f64) -> f64 + Copy, lower: f64, mass: f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut acc = 0.0;
    let mut prev = lower;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        if x > prev {
            acc += spikerace::quadrature::integrate(density, prev, x, 1e-11).unwrap().value;
            prev = x;
        }
        let f = acc / mass;
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}
