//! Point-prediction errors and prediction-interval scores.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::TauPair;
use crate::qr::{pinball_loss, TauLevel};
use crate::stats::{mean, median};

/// Error summary of point predictions. Percentage errors are `None` when some observation
/// is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointMetrics {
    pub mae: f64,
    pub mse: f64,
    pub mape: Option<f64>,
    pub medae: f64,
    pub medse: f64,
    pub medape: Option<f64>,
    pub n: usize,
}

impl PointMetrics {
    pub fn named(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("mae", Some(self.mae)),
            ("mse", Some(self.mse)),
            ("mape", self.mape),
            ("medae", Some(self.medae)),
            ("medse", Some(self.medse)),
            ("medape", self.medape),
        ]
    }
}

fn check_lengths(y: &[f64], other: &[f64], what: &str) -> Result<()> {
    if y.is_empty() {
        return Err(Error::invalid("metrics need at least one observation"));
    }
    if y.len() != other.len() {
        return Err(Error::invalid(format!(
            "{} observations but {} {what}",
            y.len(),
            other.len()
        )));
    }
    Ok(())
}

pub fn point_metrics(y: &[f64], yhat: &[f64]) -> Result<PointMetrics> {
    check_lengths(y, yhat, "predictions")?;
    let e: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| a - b).collect();
    let ae: Vec<f64> = e.iter().map(|v| v.abs()).collect();
    let se: Vec<f64> = e.iter().map(|v| v * v).collect();
    let ape: Option<Vec<f64>> = if y.iter().all(|&v| v != 0.0) {
        Some(e.iter().zip(y).map(|(ei, yi)| (ei / yi).abs()).collect())
    } else {
        None
    };
    Ok(PointMetrics {
        mae: mean(&ae),
        mse: mean(&se),
        mape: ape.as_deref().map(mean),
        medae: median(&ae),
        medse: median(&se),
        medape: ape.as_deref().map(median),
        n: y.len(),
    })
}

/// Accuracy of a set of prediction intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalMetrics {
    /// Mean interval score.
    pub mis: f64,
    /// Percentage of observations inside their closed interval.
    pub coverage: f64,
    /// Mean of `upper - lower`.
    pub range_width: f64,
    /// Mean of `upper / lower`; `None` unless every lower bound is positive.
    pub range_ratio: Option<f64>,
    pub pinball_lo: f64,
    pub pinball_hi: f64,
    pub pinball_lo_sum: f64,
    pub pinball_hi_sum: f64,
    pub alpha: f64,
    pub n: usize,
}

impl IntervalMetrics {
    pub fn named(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("mis", Some(self.mis)),
            ("coverage", Some(self.coverage)),
            ("range_width", Some(self.range_width)),
            ("range_ratio", self.range_ratio),
            ("pinball_lo", Some(self.pinball_lo)),
            ("pinball_hi", Some(self.pinball_hi)),
            ("pinball_lo_sum", Some(self.pinball_lo_sum)),
            ("pinball_hi_sum", Some(self.pinball_hi_sum)),
        ]
    }
}

/// Interval score of one observation:
/// `(u - l) + 2/alpha (l - y) 1(y < l) + 2/alpha (y - u) 1(y > u)`.
pub fn interval_score(y: f64, lower: f64, upper: f64, alpha: f64) -> f64 {
    let mut s = upper - lower;
    if y < lower {
        s += 2.0 / alpha * (lower - y);
    }
    if y > upper {
        s += 2.0 / alpha * (y - upper);
    }
    s
}

pub fn mean_pinball(y: &[f64], q: &[f64], tau: TauLevel) -> f64 {
    y.iter().zip(q).map(|(&a, &b)| pinball_loss(a, b, tau)).sum::<f64>() / y.len() as f64
}

pub fn interval_metrics(
    y: &[f64],
    lower: &[f64],
    upper: &[f64],
    alpha: f64,
    taus: TauPair,
) -> Result<IntervalMetrics> {
    check_lengths(y, lower, "lower bounds")?;
    check_lengths(y, upper, "upper bounds")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} is not in (0, 1)")));
    }
    if let Some(i) = (0..y.len()).find(|&i| lower[i].partial_cmp(&upper[i]).is_none_or(|o| o.is_gt())) {
        return Err(Error::invalid(format!(
            "interval {i} has lower bound {} above upper bound {}",
            lower[i], upper[i]
        )));
    }
    let n = y.len() as f64;
    let mis = (0..y.len())
        .map(|i| interval_score(y[i], lower[i], upper[i], alpha))
        .sum::<f64>()
        / n;
    let inside = (0..y.len())
        .filter(|&i| lower[i] <= y[i] && y[i] <= upper[i])
        .count();
    let range_width = upper.iter().zip(lower).map(|(u, l)| u - l).sum::<f64>() / n;
    let range_ratio = lower
        .iter()
        .all(|&l| l > 0.0)
        .then(|| upper.iter().zip(lower).map(|(u, l)| u / l).sum::<f64>() / n);
    let lo_sum: f64 = y.iter().zip(lower).map(|(&a, &b)| pinball_loss(a, b, taus.low())).sum();
    let hi_sum: f64 = y.iter().zip(upper).map(|(&a, &b)| pinball_loss(a, b, taus.high())).sum();
    Ok(IntervalMetrics {
        mis,
        coverage: 100.0 * inside as f64 / n,
        range_width,
        range_ratio,
        pinball_lo: lo_sum / n,
        pinball_hi: hi_sum / n,
        pinball_lo_sum: lo_sum,
        pinball_hi_sum: hi_sum,
        alpha,
        n: y.len(),
    })
}
