//! Clamped B-spline basis for the time-varying input current.
//!
//! The basis is built on the clamped knot vector (boundary knots repeated
//! `degree + 1` times) and the first basis function is dropped, so the
//! retained dimension is `degree + interior_knots.len()`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub degree: usize,
    pub boundary_knots: (f64, f64),
    pub interior_knots: Vec<f64>,
    #[serde(default = "default_true")]
    pub drop_intercept: bool,
}

fn default_true() -> bool {
    true
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self::for_window(1.0)
    }
}

impl BasisConfig {
    /// Cubic basis on `[0, t_end]` with interior knots at the quartiles.
    pub fn for_window(t_end: f64) -> Self {
        Self {
            degree: 3,
            boundary_knots: (0.0, t_end),
            interior_knots: vec![0.25 * t_end, 0.5 * t_end, 0.75 * t_end],
            drop_intercept: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.boundary_knots;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("boundary knots must satisfy lo < hi, got ({lo}, {hi})")));
        }
        let mut prev = lo;
        for &k in &self.interior_knots {
            if !(k > prev && k < hi) {
                return Err(Error::Config(format!(
                    "interior knots must be strictly increasing inside ({lo}, {hi}); offending knot {k}"
                )));
            }
            prev = k;
        }
        Ok(())
    }

    /// Number of retained basis functions.
    pub fn dim(&self) -> usize {
        let full = self.degree + 1 + self.interior_knots.len();
        if self.drop_intercept {
            full - 1
        } else {
            full
        }
    }

    pub fn window(&self) -> (f64, f64) {
        self.boundary_knots
    }
}

/// A basis compiled from a [`BasisConfig`] for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Basis {
    degree: usize,
    knots: Vec<f64>,
    n_full: usize,
    drop_first: bool,
    lo: f64,
    hi: f64,
}

impl Basis {
    pub fn new(cfg: &BasisConfig) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = cfg.boundary_knots;
        let d = cfg.degree;
        let mut knots = Vec::with_capacity(2 * (d + 1) + cfg.interior_knots.len());
        knots.extend(std::iter::repeat_n(lo, d + 1));
        knots.extend_from_slice(&cfg.interior_knots);
        knots.extend(std::iter::repeat_n(hi, d + 1));
        let n_full = knots.len() - d - 1;
        Ok(Self { degree: d, knots, n_full, drop_first: cfg.drop_intercept, lo, hi })
    }

    pub fn dim(&self) -> usize {
        if self.drop_first {
            self.n_full - 1
        } else {
            self.n_full
        }
    }

    pub fn full_dim(&self) -> usize {
        self.n_full
    }

    fn check(&self, t: f64) -> Result<()> {
        if t >= self.lo && t <= self.hi {
            Ok(())
        } else {
            Err(Error::OutsideWindow { t, lo: self.lo, hi: self.hi })
        }
    }

    /// Index `i` of the knot span with `knots[i] <= t < knots[i+1]`; the right
    /// end of the window maps to the last non-degenerate span.
    fn span(&self, t: f64) -> usize {
        let last = self.n_full - 1;
        if t >= self.hi {
            return last;
        }
        // upper bound on knots[degree..=last+1]
        let mut lo = self.degree;
        let mut hi = last + 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Writes the full (intercept-included) basis into `out`, length `full_dim()`.
    pub fn eval_full_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check(t)?;
        let d = self.degree;
        let span = self.span(t);
        let mut n = [0.0f64; 16];
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        debug_assert!(d < 16);
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &v) in n.iter().enumerate().take(d + 1) {
            out[span - d + r] = v;
        }
        Ok(())
    }

    pub fn eval_full(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_full];
        self.eval_full_into(t, &mut out)?;
        Ok(out)
    }

    /// Writes the retained basis b(t) into `out`, length `dim()`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if self.drop_first {
            let mut full = [0.0f64; 64];
            let full = &mut full[..self.n_full];
            self.eval_full_into(t, full)?;
            out.copy_from_slice(&full[1..]);
            Ok(())
        } else {
            self.eval_full_into(t, out)
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// I * exp(phi . b(s))
    pub fn current(&self, i0: f64, phi: &[f64], s: f64) -> Result<f64> {
        let b = self.eval(s)?;
        Ok(i0 * dot(phi, &b).exp())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Evaluates the retained basis vector b(t).
pub fn eval_basis(cfg: &BasisConfig, t: f64) -> Result<Vec<f64>> {
    Basis::new(cfg)?.eval(t)
}

/// Input current I * exp(phi' b(s)) at previous-spike time `s`.
pub fn input_current(i0: f64, phi: &[f64], cfg: &BasisConfig, s: f64) -> Result<f64> {
    if !(i0 > 0.0) {
        return Err(Error::InvalidParameter(format!("input current scale must be positive, got {i0}")));
    }
    let basis = Basis::new(cfg)?;
    if phi.len() != basis.dim() {
        return Err(Error::InvalidParameter(format!(
            "spline coefficient length {} does not match basis dimension {}",
            phi.len(),
            basis.dim()
        )));
    }
    basis.current(i0, phi, s)
}
