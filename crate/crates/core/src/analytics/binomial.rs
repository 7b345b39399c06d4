//! Exact two-sided binomial test.

use libm::{exp, lgamma, log};

/// Relative slack when comparing probabilities of outcomes, so that outcomes
/// exactly as likely as the observed one are not lost to rounding.
const TIE_SLACK: f64 = 1e-7;

fn log_pmf(n: u64, x: u64, ln_p: f64, ln_q: f64) -> f64 {
    let (nf, xf) = (n as f64, x as f64);
    lgamma(nf + 1.0) - lgamma(xf + 1.0) - lgamma(nf - xf + 1.0) + xf * ln_p + (nf - xf) * ln_q
}

/// Sums the pmf from `start` outward in steps of `step` (+1 or -1) until
/// the terms no longer matter.
fn tail(n: u64, start: u64, step: i64, p: f64, ln_p: f64, ln_q: f64) -> f64 {
    let q = 1.0 - p;
    let mut x = start;
    let mut term = exp(log_pmf(n, x, ln_p, ln_q));
    let mut sum = 0.0;
    loop {
        sum += term;
        if (step > 0 && x == n) || (step < 0 && x == 0) || term < sum * 1e-17 || term == 0.0 {
            return sum;
        }
        let (xf, nf) = (x as f64, n as f64);
        term *= if step > 0 {
            (nf - xf) / (xf + 1.0) * p / q
        } else {
            xf / (nf - xf + 1.0) * q / p
        };
        x = (x as i64 + step) as u64;
    }
}

/// Probability, under `Binomial(n, p)`, of an outcome no more likely than
/// `x`. `p` must lie strictly between 0 and 1.
pub fn binomial_two_sided(n: u64, x: u64, p: f64) -> f64 {
    debug_assert!(x <= n && p > 0.0 && p < 1.0);
    if n == 0 {
        return 1.0;
    }
    let (ln_p, ln_q) = (log(p), log(1.0 - p));
    let lp = |y: u64| log_pmf(n, y, ln_p, ln_q);
    let limit = lp(x) + libm::log1p(TIE_SLACK);
    let mode = (((n + 1) as f64 * p) as u64).min(n);
    if lp(mode) <= limit {
        return 1.0;
    }
    // The pmf rises up to the mode and falls after it, so each tail of
    // outcomes below the limit is a contiguous run ending at 0 or n.
    let mut p_value = 0.0;
    if lp(0) <= limit {
        // Largest y < mode with lp(y) <= limit.
        let (mut lo, mut hi) = (0u64, mode);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if lp(mid) <= limit {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        p_value += tail(n, lo, -1, p, ln_p, ln_q);
    }
    if lp(n) <= limit {
        // Smallest y > mode with lp(y) <= limit.
        let (mut lo, mut hi) = (mode, n);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if lp(mid) <= limit {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        p_value += tail(n, hi, 1, p, ln_p, ln_q);
    }
    p_value.clamp(0.0, 1.0)
}
