//! Linear quantile regression fitted by exact minimization of the pinball loss.

mod linalg;
mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A quantile level strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TauLevel(f64);

impl TauLevel {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(TauLevel(value))
        } else {
            Err(Error::invalid(format!("quantile level {value} is not in (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TauLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        TauLevel::new(v)
    }
}

impl From<TauLevel> for f64 {
    fn from(t: TauLevel) -> f64 {
        t.0
    }
}

/// Check loss of predicting `q` for an observed `y` at quantile level `tau`.
pub fn pinball_loss(y: f64, q: f64, tau: TauLevel) -> f64 {
    let tau = tau.value();
    if y >= q {
        tau * (y - q)
    } else {
        (1.0 - tau) * (q - y)
    }
}

/// A fitted conditional-quantile line `q(x) = beta_0 + beta_1 x_1 + ... + beta_k x_k`.
///
/// For the panel model the covariates are `(price, gdp_pc)` so `beta` has length 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrModel {
    pub tau: TauLevel,
    pub beta: Vec<f64>,
    pub n_train: usize,
    /// Total pinball loss over the training rows at `beta`.
    pub objective: f64,
}

impl QrModel {
    /// Predicts the conditional quantile. `x` holds the covariates without the intercept.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() + 1 != self.beta.len() {
            return Err(Error::invalid(format!(
                "expected {} covariates, got {}",
                self.beta.len() - 1,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite covariate"));
        }
        Ok(self.beta[0] + self.beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }
}

/// Fits `y ~ 1 + covariates` at level `tau`.
pub fn fit_qr<const K: usize>(covariates: &[[f64; K]], y: &[f64], tau: TauLevel) -> Result<QrModel> {
    let design: Vec<Vec<f64>> = covariates
        .iter()
        .map(|c| std::iter::once(1.0).chain(c.iter().copied()).collect())
        .collect();
    fit_design(&design, y, tau)
}

/// Fits a quantile regression on an explicit design matrix (rows of equal length; include
/// a column of ones for an intercept).
pub fn fit_design(design: &[Vec<f64>], y: &[f64], tau: TauLevel) -> Result<QrModel> {
    let n = design.len();
    if n != y.len() {
        return Err(Error::invalid(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    let p = design.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(Error::invalid("design matrix has no columns"));
    }
    if n < 3 || n < p {
        return Err(Error::invalid(format!(
            "quantile regression needs at least {} rows, got {n}",
            p.max(3)
        )));
    }
    if design.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("design rows have unequal lengths"));
    }
    if design.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in quantile regression data"));
    }
    if linalg::column_rank(design) < p {
        return Err(Error::RankDeficient);
    }

    let beta = simplex::solve(design, y, tau.value())?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::ModelPathology("non-finite quantile regression coefficients".into()));
    }
    let objective = design
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            pinball_loss(yi, fit, tau)
        })
        .sum();
    Ok(QrModel {
        tau,
        beta,
        n_train: n,
        objective,
    })
}
