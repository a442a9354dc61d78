//! Wallenius' noncentral hypergeometric distribution.
//!
//! An urn holds `m1` items of the first colour (genes in the set) with weight
//! `omega` and `m2` items of the second colour with weight 1; `n` items are
//! drawn one by one without replacement, each with probability proportional
//! to its weight. The pmf is
//!
//! ```text
//! P(h) = C(m1, h) C(m2, n-h) * I(h),
//! I(h) = int_0^1 (1 - t^(omega/D))^h (1 - t^(1/D))^(n-h) dt,
//! D    = omega (m1 - h) + (m2 - (n - h)).
//! ```
//!
//! Substituting `t = u^D` and then `u = exp(-s)` turns `I(h)` into
//! `int_0^inf D exp(-D s) (1 - exp(-omega s))^h (1 - exp(-s))^(n-h) ds`, whose
//! integrand is log-concave in `s`. The integral is evaluated around the peak
//! of the integrand with everything scaled by the peak value, so the result
//! keeps full relative precision even when `I(h)` is astronomically small.

use super::hypergeom::ln_choose;
use super::quadrature::integrate;
use crate::error::{GsaError, Result};

/// Integral tolerance relative to the integral itself. Because the pmf is the
/// integral times a constant and never exceeds 1, this bounds the absolute pmf
/// error by the same amount.
const REL_TOL: f64 = 1e-12;
/// Bound on `|sum(pmf) - 1|` beyond which the pmf is renormalized.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalleniusParams {
    /// Items inside the set (`G`).
    pub m1: u64,
    /// Items outside the set (`N - G`).
    pub m2: u64,
    /// Number of draws (`L`).
    pub n: u64,
    /// Odds ratio of drawing an inside item.
    pub omega: f64,
}

impl WalleniusParams {
    pub fn new(m1: u64, m2: u64, n: u64, omega: f64) -> Result<Self> {
        if n > m1 + m2 {
            return Err(GsaError::invalid(format!(
                "cannot draw {n} items from an urn of {}",
                m1 + m2
            )));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(GsaError::invalid(format!("odds ratio must be positive and finite, got {omega}")));
        }
        Ok(WalleniusParams { m1, m2, n, omega })
    }

    /// Smallest and largest attainable inside-item counts.
    pub fn support(&self) -> (u64, u64) {
        (self.n.saturating_sub(self.m2), self.n.min(self.m1))
    }
}

fn ln_one_minus_exp_neg(x: f64) -> f64 {
    // ln(1 - e^-x) for x > 0
    (-(-x).exp_m1()).ln()
}

/// `ln I(h)` for a non-degenerate draw (`D > 0`).
fn ln_integral(omega: f64, d: f64, hits: f64, misses: f64) -> Result<f64> {
    let phi = |s: f64| {
        let mut v = d.ln() - d * s;
        if hits > 0.0 {
            v += hits * ln_one_minus_exp_neg(omega * s);
        }
        if misses > 0.0 {
            v += misses * ln_one_minus_exp_neg(s);
        }
        v
    };

    if hits == 0.0 && misses == 0.0 {
        return Ok(0.0);
    }

    // phi' is strictly decreasing from +inf to -d; bracket and bisect its root
    let dphi = |s: f64| -d + hits * omega / (omega * s).exp_m1() + misses / s.exp_m1();
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    while dphi(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(GsaError::Numerical("Wallenius integrand peak not bracketed".into()));
        }
    }
    while dphi(lo) < 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(GsaError::Numerical("Wallenius integrand peak not bracketed".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dphi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let peak = 0.5 * (lo + hi);
    let peak_value = phi(peak);

    let curvature = {
        let e = (omega * peak).exp_m1();
        let f = peak.exp_m1();
        hits * omega * omega * (e + 1.0) / (e * e) + misses * (f + 1.0) / (f * f)
    };
    let width = 1.0 / curvature.sqrt();
    let scaled = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (phi(s) - peak_value).exp()
        }
    };
    // the scaled integrand is 1 at the peak, so its integral is of order `width`
    let tol = REL_TOL * width;

    let mut total = 0.0;
    // left of the peak: breakpoints at peak - k*width, doubling k
    let mut right_end = peak;
    let mut k = 1.0;
    loop {
        let left_end = (peak - k * width).max(0.0);
        total += integrate(scaled, left_end, right_end, tol)?;
        if left_end == 0.0 {
            break;
        }
        right_end = left_end;
        k *= 2.0;
    }
    // right of the peak until the tail is negligible
    let mut left_end = peak;
    let mut k = 1.0;
    loop {
        let end = peak + k * width;
        let piece = integrate(scaled, left_end, end, tol)?;
        total += piece;
        // log-concavity: the remaining tail is at most f(end) / |phi'(end)|
        let tail_bound = scaled(end) / (-dphi(end)).max(f64::MIN_POSITIVE);
        if tail_bound < REL_TOL * 1e-3 * total {
            break;
        }
        left_end = end;
        k *= 2.0;
        if k > 1e12 {
            return Err(GsaError::Numerical("Wallenius integrand tail does not decay".into()));
        }
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(GsaError::Numerical(format!(
            "Wallenius integral evaluated to {total} (omega = {omega}, D = {d})"
        )));
    }
    Ok(peak_value + total.ln())
}

/// Unnormalized pmf values `P(0), ..., P(min(m1, n))`; entries outside the
/// support are zero.
pub fn wallenius_pmf(wp: &WalleniusParams) -> Result<Vec<f64>> {
    let top = wp.m1.min(wp.n);
    let mut pmf = vec![0.0; top as usize + 1];
    let (lo, hi) = wp.support();
    if wp.n == wp.m1 + wp.m2 {
        // everything is drawn
        pmf[wp.m1 as usize] = 1.0;
        return Ok(pmf);
    }
    for h in lo..=hi {
        let d = wp.omega * (wp.m1 - h) as f64 + (wp.m2 - (wp.n - h)) as f64;
        let ln_i = ln_integral(wp.omega, d, h as f64, (wp.n - h) as f64)?;
        pmf[h as usize] = (ln_choose(wp.m1, h) + ln_choose(wp.m2, wp.n - h) + ln_i).exp();
    }
    Ok(pmf)
}

/// Upper tail `P(X >= h)`.
pub fn wallenius_tail(wp: &WalleniusParams, h: u64) -> Result<f64> {
    if h > wp.m1.min(wp.n) {
        return Err(GsaError::invalid(format!(
            "hit count {h} exceeds min(m1, n) = {}",
            wp.m1.min(wp.n)
        )));
    }
    if h == 0 {
        return Ok(1.0);
    }
    let pmf = wallenius_pmf(wp)?;
    let total: f64 = pmf.iter().sum();
    let upper: f64 = pmf[h as usize..].iter().sum();
    let p = if (total - 1.0).abs() > RENORMALIZE_THRESHOLD {
        log::debug!("renormalizing Wallenius pmf (sum = {total})");
        upper / total
    } else {
        upper
    };
    Ok(p.clamp(0.0, 1.0))
}
