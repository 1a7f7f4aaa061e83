//! Numerically stable scalar helpers shared by the likelihood code.

use statrs::function::gamma::ln_gamma;

/// `ln(1 + e^t)` without overflow or catastrophic cancellation.
pub(crate) fn log1pexp(t: f64) -> f64 {
    if t <= -37.0 {
        t.exp()
    } else if t <= 18.0 {
        t.exp().ln_1p()
    } else if t <= 33.3 {
        t + (-t).exp()
    } else {
        t
    }
}

/// Logistic function, stable on both tails.
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(e^a + e^b)` tolerating `-inf` in either argument.
pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(a!)` for a count.
pub(crate) fn ln_factorial(a: u64) -> f64 {
    if a < 2 {
        0.0
    } else {
        ln_gamma(a as f64 + 1.0)
    }
}
