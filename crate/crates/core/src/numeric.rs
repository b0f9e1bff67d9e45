//! Log-space accumulation helpers.
//!
//! Hypothesis weights and conditional likelihoods shrink geometrically with
//! the series length, so every product in the filter is kept as a sum of
//! logs and normalized through the usual max-shifted log-sum-exp.

#[allow(unused_imports)]
use num_traits::Float;

/// ln(2π).
pub(crate) const LN_TAU: f64 = 1.837877066409345483560659472811235;

/// log(exp(a) + exp(b)) without leaving log space.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// log Σ exp(x_i) over the keys of `items`.
///
/// Returns −∞ for an empty slice or when every key is −∞.
pub fn log_sum_exp_by<T>(items: &[T], key: impl Fn(&T) -> f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for it in items {
        let k = key(it);
        if k > max {
            max = k;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for it in items {
        sum += (key(it) - max).exp();
    }
    max + sum.ln()
}

/// log Σ exp(x_i) over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    log_sum_exp_by(xs, |x| *x)
}
