//! Exact forward filtering, backward sampling and marginal likelihood for the
//! competition model's latent labels.
//!
//! A train's joint terms split into pieces that depend on `delta` and pieces
//! that do not. [`RaceTrain`] caches the latter so that trying many candidate
//! delays (the ensemble step) only re-evaluates the shifted terms.

use rand::Rng;

use crate::error::{Error, Result};
use crate::igdist::{ig_log_pdf, ig_log_sf, CompetitionParams, StimulusParams};
use crate::special::log_add_exp;
use crate::splines::Basis;
use crate::train::{Label, PreparedTrain, SpikeTrain};

/// Per-step quantities of one forward pass.
#[derive(Debug, Clone)]
pub struct FilterState {
    /// `log_joint[j][prev][cur]`; for `j = 0` only row 0 is meaningful. The
    /// final step includes the censoring terms.
    pub log_joint: Vec<[[f64; 2]; 2]>,
    /// log P(L_j = S | x_{1:j}); the last entry conditions on the whole train.
    pub log_filtered: Vec<[f64; 2]>,
    /// Per-step log normalizers c_j.
    pub log_norm: Vec<f64>,
}

impl FilterState {
    pub fn log_marginal(&self) -> f64 {
        self.log_norm.iter().sum()
    }

    /// P(L_j = A | x_{1:j}) for each spike.
    pub fn prob_a(&self) -> Vec<f64> {
        self.log_filtered.iter().map(|p| p[0].exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.log_norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_norm.is_empty()
    }
}

/// Delay-free terms of one AB train under fixed stimulus parameters.
#[derive(Debug, Clone)]
pub struct RaceTrain {
    isi: Vec<f64>,
    /// rate[j][S] at the start of ISI j
    rate: Vec<[f64; 2]>,
    sigma: [f64; 2],
    /// log f_S(x_j)
    log_pdf: Vec<[f64; 2]>,
    /// log S_S(x_j)
    log_sf: Vec<[f64; 2]>,
    horizon: f64,
    end_rate: [f64; 2],
    /// log S_S(horizon)
    end_sf: [f64; 2],
}

impl RaceTrain {
    pub fn new(a: &StimulusParams, b: &StimulusParams, train: &PreparedTrain) -> Self {
        let sigma = [a.sigma, b.sigma];
        let n = train.len();
        let mut rate = Vec::with_capacity(n);
        let mut log_pdf = Vec::with_capacity(n);
        let mut log_sf = Vec::with_capacity(n);
        for j in 0..n {
            let row = train.row(j);
            let r = [a.rate_row(row), b.rate_row(row)];
            let x = train.isi[j];
            log_pdf.push([ig_log_pdf(x, r[0], sigma[0]), ig_log_pdf(x, r[1], sigma[1])]);
            log_sf.push([ig_log_sf(x, r[0], sigma[0]), ig_log_sf(x, r[1], sigma[1])]);
            rate.push(r);
        }
        let end_rate = [a.rate_row(&train.last_row), b.rate_row(&train.last_row)];
        let h = train.horizon;
        let end_sf = [ig_log_sf(h, end_rate[0], sigma[0]), ig_log_sf(h, end_rate[1], sigma[1])];
        Self { isi: train.isi.clone(), rate, sigma, log_pdf, log_sf, horizon: train.horizon, end_rate, end_sf }
    }

    pub fn len(&self) -> usize {
        self.isi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.isi.is_empty()
    }

    /// Log likelihood of an empty train: neither process fires in the window.
    pub fn empty_loglik(&self) -> f64 {
        self.end_sf[0] + self.end_sf[1]
    }

    /// Joint terms of step `j` for the given delay: `[prev][cur]`, or the
    /// first-spike terms in row 0 when `j = 0`.
    fn step_terms(&self, j: usize, delta: f64) -> [[f64; 2]; 2] {
        let pdf = self.log_pdf[j];
        let sf = self.log_sf[j];
        let mut out = [[f64::NEG_INFINITY; 2]; 2];
        if j == 0 {
            out[0] = [pdf[0] + sf[1], pdf[1] + sf[0]];
            out[1] = out[0];
            return out;
        }
        if delta == 0.0 {
            let t = [pdf[0] + sf[1], pdf[1] + sf[0]];
            return [t, t];
        }
        let x = self.isi[j];
        let r = self.rate[j];
        let s = self.sigma;
        let sf_d = [ig_log_sf(x - delta, r[0], s[0]), ig_log_sf(x - delta, r[1], s[1])];
        // staying: winner undelayed, loser delayed
        out[0][0] = pdf[0] + sf_d[1];
        out[1][1] = pdf[1] + sf_d[0];
        if x > delta {
            // switching: winner delayed, loser undelayed
            out[1][0] = ig_log_pdf(x - delta, r[0], s[0]) + sf[1];
            out[0][1] = ig_log_pdf(x - delta, r[1], s[1]) + sf[0];
        }
        out
    }

    /// log censoring terms after the last spike, indexed by its label.
    fn end_terms(&self, delta: f64) -> [f64; 2] {
        let h = self.horizon;
        let (r, s) = (self.end_rate, self.sigma);
        if delta == 0.0 {
            let t = self.end_sf[0] + self.end_sf[1];
            return [t, t];
        }
        [
            self.end_sf[0] + ig_log_sf(h - delta, r[1], s[1]),
            self.end_sf[1] + ig_log_sf(h - delta, r[0], s[0]),
        ]
    }

    /// Forward pass for delay `delta`. The train must be nonempty.
    pub fn filter(&self, delta: f64) -> Result<FilterState> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidParameter("forward filtering needs a nonempty train".into()));
        }
        let end = self.end_terms(delta);
        let mut log_joint = Vec::with_capacity(n);
        let mut log_filtered = Vec::with_capacity(n);
        let mut log_norm = Vec::with_capacity(n);
        let mut prev = [0.0f64; 2];
        for j in 0..n {
            let mut lj = self.step_terms(j, delta);
            if j + 1 == n {
                for row in lj.iter_mut() {
                    row[0] += end[0];
                    row[1] += end[1];
                }
            }
            let u = if j == 0 {
                lj[0]
            } else {
                [
                    log_add_exp(prev[0] + lj[0][0], prev[1] + lj[1][0]),
                    log_add_exp(prev[0] + lj[0][1], prev[1] + lj[1][1]),
                ]
            };
            let c = log_add_exp(u[0], u[1]);
            let filt = if c == f64::NEG_INFINITY {
                [f64::NEG_INFINITY; 2]
            } else {
                [u[0] - c, u[1] - c]
            };
            log_joint.push(lj);
            log_filtered.push(filt);
            log_norm.push(c);
            prev = filt;
        }
        Ok(FilterState { log_joint, log_filtered, log_norm })
    }

    /// Marginal log likelihood for delay `delta`; empty trains allowed.
    pub fn loglik(&self, delta: f64) -> f64 {
        if self.is_empty() {
            return self.empty_loglik();
        }
        self.filter(delta).map(|f| f.log_marginal()).unwrap_or(f64::NEG_INFINITY)
    }
}

fn prepare(cp: &CompetitionParams, train: &SpikeTrain, basis: &Basis) -> Result<RaceTrain> {
    cp.validate()?;
    let p = PreparedTrain::new(train, basis)?;
    Ok(RaceTrain::new(&cp.a, &cp.b, &p))
}

pub fn forward_filter(cp: &CompetitionParams, train: &SpikeTrain, basis: &Basis) -> Result<FilterState> {
    prepare(cp, train, basis)?.filter(cp.delta)
}

pub fn marginal_loglik(cp: &CompetitionParams, train: &SpikeTrain, basis: &Basis) -> Result<f64> {
    Ok(prepare(cp, train, basis)?.loglik(cp.delta))
}

fn draw<R: Rng + ?Sized>(w: [f64; 2], rng: &mut R) -> Option<Label> {
    let c = log_add_exp(w[0], w[1]);
    if c == f64::NEG_INFINITY || c.is_nan() {
        return None;
    }
    let pa = (w[0] - c).exp();
    Some(if rng.random::<f64>() < pa { Label::A } else { Label::B })
}

/// Draws a label sequence from P(L | train, theta) given a completed forward pass.
/// `train_index` only labels the error.
pub fn backward_sample<R: Rng + ?Sized>(fs: &FilterState, train_index: usize, rng: &mut R) -> Result<Vec<Label>> {
    let n = fs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut labels = vec![Label::A; n];
    labels[n - 1] = draw(fs.log_filtered[n - 1], rng).ok_or(Error::Infeasible { train: train_index, spike: n - 1 })?;
    for j in (0..n - 1).rev() {
        let next = labels[j + 1].index();
        let w = [
            fs.log_filtered[j][0] + fs.log_joint[j + 1][0][next],
            fs.log_filtered[j][1] + fs.log_joint[j + 1][1][next],
        ];
        labels[j] = draw(w, rng).ok_or(Error::Infeasible { train: train_index, spike: j })?;
    }
    Ok(labels)
}
