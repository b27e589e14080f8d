//! Small order-statistic helpers shared by the descriptive and metric code.

use std::cmp::Ordering;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator. A single value has zero spread.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub(crate) fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Quantile by linear interpolation between order statistics, using the 1-based position
/// `h = (n - 1) p + 1`.
///
/// `xs` must be non-empty and `p` in `[0, 1]`.
pub fn quantile_linear(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of an empty series");
    let v = sorted(xs);
    quantile_linear_sorted(&v, p)
}

pub(crate) fn quantile_linear_sorted(v: &[f64], p: f64) -> f64 {
    let n = v.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return v[n - 1];
    }
    let frac = h - lo as f64;
    if frac == 0.0 {
        v[lo]
    } else {
        v[lo] + frac * (v[lo + 1] - v[lo])
    }
}

/// Median with the even-length convention of averaging the two middle order statistics.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty series");
    let v = sorted(xs);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
