//! Tail-stable standard normal special functions.
//!
//! Everything in the far tail flows through `log_ccdf` / `inv_ccdf_log`
//! so that half-space margins up to `MAX_MARGIN` stay finite. The naive
//! composition `inv_cdf(cdf(t) + u * (1 - cdf(t)))` loses all precision
//! past t ~ 8; the complementary log-space forms used here are
//! algebraically identical.

use libm::erfc;

/// Largest margin the conditional sampler accepts; `ccdf(37) ~ 5.7e-300`
/// is still a normal double, beyond that the tail mass underflows.
pub const MAX_MARGIN: f64 = 37.0;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;

/// Standard normal density.
pub fn pdf(t: f64) -> f64 {
    (-0.5 * t * t - LN_SQRT_2PI).exp()
}

/// Log of the standard normal density.
pub fn log_pdf(t: f64) -> f64 {
    -0.5 * t * t - LN_SQRT_2PI
}

/// Cumulative distribution function.
pub fn cdf(t: f64) -> f64 {
    0.5 * erfc(-t * FRAC_1_SQRT_2)
}

/// Complementary cdf (upper tail probability).
pub fn ccdf(t: f64) -> f64 {
    0.5 * erfc(t * FRAC_1_SQRT_2)
}

/// Log of the complementary cdf; finite well past `MAX_MARGIN`.
pub fn log_ccdf(t: f64) -> f64 {
    let q = ccdf(t);
    if q > 0.0 && (t <= 30.0 || q > 1e-305) {
        q.ln()
    } else {
        // Mills-ratio asymptotic: ccdf(t) = pdf(t)/t * (1 - 1/t^2 + 3/t^4 - ...)
        let inv2 = 1.0 / (t * t);
        log_pdf(t) - t.ln() + (1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2))).ln()
    }
}

/// Inverse of the complementary cdf: returns t with `ccdf(t) = q`.
pub fn inv_ccdf(q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "inv_ccdf: q must lie in (0, 1), got {q}");
    if q > 0.5 {
        -inv_ccdf_from_log((1.0 - q).ln())
    } else {
        inv_ccdf_from_log(q.ln())
    }
}

/// Inverse of the complementary cdf given `log q`; usable for tail masses
/// far below the smallest representable double's logarithm.
pub fn inv_ccdf_log(log_q: f64) -> f64 {
    assert!(log_q < 0.0, "inv_ccdf_log: log q must be negative, got {log_q}");
    const LN_HALF: f64 = -0.693_147_180_559_945_3;
    if log_q > LN_HALF {
        // q > 1/2: root is negative, reflect. q is not tiny here so the
        // plain-space complement loses nothing (computed via expm1).
        -inv_ccdf_from_log((-f64::exp_m1(log_q)).ln())
    } else {
        inv_ccdf_from_log(log_q)
    }
}

/// Newton iteration on `log_ccdf(t) = log_q` for `log_q <= ln(1/2)`
/// (root in [0, inf)). `log_ccdf` is concave and decreasing, so Newton
/// from the left of the root converges monotonically.
fn inv_ccdf_from_log(log_q: f64) -> f64 {
    let r = -log_q;
    let mut t = if r < 1.0 {
        0.0
    } else {
        // two fixed-point passes on ccdf(t) ~ pdf(t)/t
        let mut t0 = (2.0 * r).sqrt();
        for _ in 0..2 {
            let adj = 2.0 * (r - t0.ln() - LN_SQRT_2PI);
            if adj > 0.0 {
                t0 = adj.sqrt();
            } else {
                t0 = 0.0;
                break;
            }
        }
        t0
    };
    for _ in 0..40 {
        let g = log_ccdf(t) - log_q;
        let hazard = (log_pdf(t) - log_ccdf(t)).exp();
        let step = g / hazard;
        t += step;
        if step.abs() <= 1e-15 * (1.0 + t.abs()) {
            break;
        }
    }
    t
}
