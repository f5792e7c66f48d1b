//! Log-space accumulation and scalar search helpers shared by the kernels.
//!
//! Quadrature integrands here are products of exponentials of path values; on
//! deep windows the exponents leave the f64 range long before the integrals
//! do, so sums are carried as (running max, rescaled partial sum) pairs.

/// log(e^a + e^b) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Accumulates sums of positive terms given as logarithms; the running total
/// is e^max * sum with sum kept in [0, +inf) and rescaled when a new maximum
/// arrives.
#[derive(Debug, Clone)]
pub struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    pub fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add_log_term(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.sum += (log_term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    /// Natural log of the accumulated total; -inf when empty.
    pub fn log_total(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }

}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

/// Largest d in (0, hi] with pred(d) true, located by bisection.
///
/// Assumes pred is monotone (true on an interval (0, d*]). Returns hi
/// immediately when pred(hi) holds; None when no positive d was found to
/// satisfy pred within the iteration budget.
pub fn bisect_sup<F: FnMut(f64) -> bool>(hi: f64, iters: u32, mut pred: F) -> Option<f64> {
    if pred(hi) {
        return Some(hi);
    }
    let mut lo = 0.0_f64;
    let mut hi = hi;
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > 0.0 {
        Some(lo)
    } else {
        None
    }
}

/// Formats with 17 significant digits, enough for exact f64 round-trips and
/// byte-stable artifacts.
pub fn fmt_g17(x: f64) -> String {
    format!("{:.16e}", x)
}
