use statrs::function::factorial::ln_binomial;

use crate::error::{GsaError, Result};

/// `ln C(n, k)`, evaluated through log-gamma.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        ln_binomial(n, k)
    }
}

fn check_args(n: u64, g: u64, l: u64, h: u64) -> Result<()> {
    if g > n || l > n {
        return Err(GsaError::invalid(format!(
            "hypergeometric arguments out of range: N = {n}, G = {g}, L = {l}"
        )));
    }
    if h > g.min(l) {
        return Err(GsaError::invalid(format!(
            "hit count H = {h} exceeds min(G, L) = {}",
            g.min(l)
        )));
    }
    Ok(())
}

/// `f(j; N, G, L) = C(G, j) C(N-G, L-j) / C(N, L)`.
pub fn hypergeom_pmf(n: u64, g: u64, l: u64, j: u64) -> f64 {
    if j > g || j > l || l - j > n - g {
        return 0.0;
    }
    (ln_choose(g, j) + ln_choose(n - g, l - j) - ln_choose(n, l)).exp()
}

/// Upper tail `P(X >= H)` for `X ~ Hypergeometric(N, G, L)`: the one-sided
/// Fisher exact p-value of over-representation.
pub fn hypergeom_tail(n: u64, g: u64, l: u64, h: u64) -> Result<f64> {
    check_args(n, g, l, h)?;
    let lowest = l.saturating_sub(n - g);
    if h <= lowest {
        return Ok(1.0);
    }
    let ln_total = ln_choose(n, l);
    let term = |j: u64| (ln_choose(g, j) + ln_choose(n - g, l - j) - ln_total).exp();
    // Sum whichever side of the mean is the smaller tail; summing the big
    // side directly loses ordering between nearby tails close to 1.
    let mean = l as f64 * g as f64 / n as f64;
    let p = if h as f64 > mean {
        (h..=g.min(l)).map(term).sum::<f64>()
    } else {
        1.0 - (lowest..h).map(term).sum::<f64>()
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Upper tail of `Binomial(L, G/N)` at `H`, the large-universe approximation
/// of [`hypergeom_tail`].
pub fn hypergeom_tail_binomial_approx(n: u64, g: u64, l: u64, h: u64) -> Result<f64> {
    check_args(n, g, l, h)?;
    if h == 0 {
        return Ok(1.0);
    }
    if g == n {
        return Ok(1.0);
    }
    if g == 0 {
        return Ok(0.0);
    }
    let q = g as f64 / n as f64;
    let (ln_q, ln_1q) = (q.ln(), (-q).ln_1p());
    let p: f64 = (h..=l)
        .map(|j| (ln_choose(l, j) + j as f64 * ln_q + (l - j) as f64 * ln_1q).exp())
        .sum();
    Ok(p.min(1.0))
}
