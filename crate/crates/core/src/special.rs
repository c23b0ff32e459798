//! Scalar special functions used throughout the likelihood code.
//!
//! Everything here works in log space. The normal CDF is built on `libm::erfc`,
//! which keeps full relative accuracy in the tails, with an asymptotic series
//! taking over once `erfc` would start to lose precision to subnormals.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

/// ln(sqrt(2 pi))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn log_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn ndtr(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    } else {
        0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
    }
}

/// log Phi(x), accurate to near machine precision over the whole real line.
pub fn log_ndtr(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 0.0 {
        // Phi(x) = 1 - Phi(-x); ln1p keeps the small part exact.
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x > -30.0 {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    } else if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        // Phi(x) = phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - 15/x^6 + ...)
        let z = 1.0 / (x * x);
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..=7 {
            term *= -((2 * k - 1) as f64) * z;
            series += term;
        }
        log_normal_pdf(x) - (-x).ln() + series.ln()
    }
}

/// ln(exp(a) + exp(b))
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// ln(1 - exp(x)) for x <= 0.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_ndtr_matches_known_values() {
        assert!((log_ndtr(0.0) - 0.5f64.ln()).abs() < 1e-15);
        // Phi(-2) = 0.022750131948179195
        assert!((log_ndtr(-2.0) - 0.022_750_131_948_179_195f64.ln()).abs() < 1e-14);
        // Phi(-10) = 7.619853024160527e-24
        let want = 7.619_853_024_160_527e-24f64.ln();
        assert!(((log_ndtr(-10.0) - want) / want).abs() < 1e-14);
        // Phi(8): 1 - 6.22096057427178e-16
        assert!((log_ndtr(8.0) + 6.220_960_574_271_78e-16).abs() < 1e-25);
    }

    #[test]
    fn log_ndtr_is_continuous_across_branch_points() {
        for &x in &[-30.0f64, 0.0] {
            let l = log_ndtr(x - 1e-9);
            let r = log_ndtr(x + 1e-9);
            assert!(((l - r) / l.abs().max(1e-300)).abs() < 1e-8, "jump at {x}: {l} vs {r}");
        }
    }

    #[test]
    fn log_ndtr_far_tail() {
        // Mills-ratio leading term dominates; relative agreement within the series tail.
        let x = -200.0f64;
        let lead = log_normal_pdf(x) - (-x).ln();
        assert!((log_ndtr(x) - lead).abs() < 3e-5);
        assert!(log_ndtr(-1e10).is_finite());
    }

    #[test]
    fn log1m_exp_branches() {
        assert!((log1m_exp(-1e-10) - (1e-10f64).ln()).abs() < 1e-6);
        assert!((log1m_exp(-50.0) + (-50.0f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - LN_2).abs() < 1e-15);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + LN_2)).abs() < 1e-12);
    }
}
