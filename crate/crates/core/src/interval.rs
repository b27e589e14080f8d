//! Leave-one-region-out prediction intervals and anomaly classification.
//!
//! For each region, models are fitted on every other region (all years pooled) and the
//! held-out region's observations are compared with the predicted lower and upper
//! conditional quantiles. Observations above the interval are `High`, below it `Low`.
//! Every record carries the upper and lower anomaly ratios
//! `uar = (y - upper) / upper` and `lar = (y - lower) / lower`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ForestConfig, QuantileForest};
use crate::panel::{PanelDataset, PanelObservation};
use crate::qr::{fit_qr, QrModel, TauLevel};

pub const RECORD_HEADER: [&str; 11] = [
    "region",
    "year",
    "observed",
    "lower",
    "upper",
    "tau_low",
    "tau_high",
    "class",
    "uar",
    "lar",
    "crossing_repaired",
];

/// Symmetric pair of quantile levels bounding a prediction interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPair {
    low: TauLevel,
    high: TauLevel,
}

impl TauPair {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        let (low, high) = (TauLevel::new(low)?, TauLevel::new(high)?);
        if low.value() >= high.value() {
            return Err(Error::invalid(format!(
                "lower level {} must be below upper level {}",
                low.value(),
                high.value()
            )));
        }
        if (low.value() + high.value() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "quantile levels {} and {} are not symmetric (must sum to 1)",
                low.value(),
                high.value()
            )));
        }
        Ok(TauPair { low, high })
    }

    pub fn low(&self) -> TauLevel {
        self.low
    }

    pub fn high(&self) -> TauLevel {
        self.high
    }

    pub fn nominal_coverage(&self) -> f64 {
        self.high.value() - self.low.value()
    }

    /// Significance level `1 - coverage` used by the interval score.
    pub fn alpha(&self) -> f64 {
        1.0 - self.nominal_coverage()
    }
}

impl Default for TauPair {
    fn default() -> Self {
        TauPair::new(0.1, 0.9).expect("0.1/0.9 is a valid pair")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub region: String,
    pub year: i32,
    pub lower: f64,
    pub upper: f64,
    pub taus: TauPair,
    /// The raw lower prediction exceeded the upper one and the two were swapped.
    pub crossing_repaired: bool,
}

impl PredictionInterval {
    /// Orders two raw quantile predictions into an interval.
    pub fn from_predictions(
        region: &str,
        year: i32,
        low_pred: f64,
        high_pred: f64,
        taus: TauPair,
    ) -> Result<Self> {
        if !low_pred.is_finite() || !high_pred.is_finite() {
            return Err(Error::ModelPathology(format!(
                "non-finite interval prediction for ({region}, {year})"
            )));
        }
        let crossing_repaired = low_pred > high_pred;
        let (lower, upper) = if crossing_repaired {
            (high_pred, low_pred)
        } else {
            (low_pred, high_pred)
        };
        Ok(PredictionInterval {
            region: region.to_string(),
            year,
            lower,
            upper,
            taus,
            crossing_repaired,
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Anything that predicts a single conditional quantile at a covariate vector.
pub trait QuantilePredictor {
    fn predict_at(&self, x: &[f64]) -> Result<f64>;
}

impl QuantilePredictor for QrModel {
    fn predict_at(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

/// A forest read at one fixed quantile level.
pub struct ForestQuantile<'a> {
    pub forest: &'a QuantileForest,
    pub tau: TauLevel,
}

impl QuantilePredictor for ForestQuantile<'_> {
    fn predict_at(&self, x: &[f64]) -> Result<f64> {
        self.forest.predict_quantile(x, self.tau)
    }
}

pub fn build_interval(
    lo_model: &impl QuantilePredictor,
    hi_model: &impl QuantilePredictor,
    x: &[f64],
    region: &str,
    year: i32,
    taus: TauPair,
) -> Result<PredictionInterval> {
    let lo = lo_model.predict_at(x)?;
    let hi = hi_model.predict_at(x)?;
    PredictionInterval::from_predictions(region, year, lo, hi, taus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnomalyClass {
    Normal,
    High,
    Low,
}

impl fmt::Display for AnomalyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyClass::Normal => "Normal",
            AnomalyClass::High => "High",
            AnomalyClass::Low => "Low",
        })
    }
}

impl FromStr for AnomalyClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Normal" => Ok(AnomalyClass::Normal),
            "High" => Ok(AnomalyClass::High),
            "Low" => Ok(AnomalyClass::Low),
            other => Err(Error::invalid(format!("unknown anomaly class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRecord {
    pub region: String,
    pub year: i32,
    pub observed: f64,
    pub interval: PredictionInterval,
    pub class: AnomalyClass,
    pub uar: f64,
    pub lar: f64,
}

/// Classifies one observation against its interval. Bounds count as inside.
pub fn classify_and_quantify(observed: f64, pi: &PredictionInterval) -> Result<AnomalyRecord> {
    if pi.lower <= 0.0 || pi.upper <= 0.0 {
        return Err(Error::ModelPathology(format!(
            "non-positive interval bound ({}, {}) for ({}, {}); anomaly ratios are undefined",
            pi.lower, pi.upper, pi.region, pi.year
        )));
    }
    if !observed.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite observation for ({}, {})",
            pi.region, pi.year
        )));
    }
    let class = if observed > pi.upper {
        AnomalyClass::High
    } else if observed < pi.lower {
        AnomalyClass::Low
    } else {
        AnomalyClass::Normal
    };
    Ok(AnomalyRecord {
        region: pi.region.clone(),
        year: pi.year,
        observed,
        class,
        uar: (observed - pi.upper) / pi.upper,
        lar: (observed - pi.lower) / pi.lower,
        interval: pi.clone(),
    })
}

/// Training rows (all other regions) and test rows (the held-out region).
#[derive(Debug, Clone)]
pub struct LogoSplit<'a> {
    pub train: Vec<&'a PanelObservation>,
    pub test: Vec<&'a PanelObservation>,
}

pub fn logo_split<'a>(d: &'a PanelDataset, region: &str) -> Result<LogoSplit<'a>> {
    if d.regions().len() < 2 {
        return Err(Error::invalid(
            "leave-one-region-out needs at least two regions",
        ));
    }
    if !d.regions().iter().any(|r| r == region) {
        return Err(Error::invalid(format!("unknown region `{region}`")));
    }
    let (test, train) = d.observations().iter().partition(|o| o.region == region);
    Ok(LogoSplit { train, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Qr,
    Qrf,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Qr => "qr",
            Method::Qrf => "qrf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    Qr,
    Qrf(ForestConfig),
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Qr => Method::Qr,
            MethodConfig::Qrf(_) => Method::Qrf,
        }
    }
}

/// Models fitted on one fold's training rows, able to predict a fixed list of quantile
/// levels. QR fits one line per level; QRF grows one forest that serves every level.
pub enum FittedFold {
    Qr(Vec<QrModel>),
    Qrf {
        forest: QuantileForest,
        taus: Vec<TauLevel>,
    },
}

impl FittedFold {
    pub fn fit(train: &[&PanelObservation], cfg: &MethodConfig, taus: &[TauLevel]) -> Result<Self> {
        let x: Vec<[f64; 2]> = train.iter().map(|o| o.covariates()).collect();
        let y: Vec<f64> = train.iter().map(|o| o.sales_pc).collect();
        match cfg {
            MethodConfig::Qr => Ok(FittedFold::Qr(
                taus.iter()
                    .map(|&t| fit_qr(&x, &y, t))
                    .collect::<Result<_>>()?,
            )),
            MethodConfig::Qrf(fc) => Ok(FittedFold::Qrf {
                forest: QuantileForest::fit(&x, &y, fc)?,
                taus: taus.to_vec(),
            }),
        }
    }

    /// Predictions at `x`, one per quantile level passed to [`FittedFold::fit`].
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FittedFold::Qr(models) => models.iter().map(|m| m.predict(x)).collect(),
            FittedFold::Qrf { forest, taus } => forest.predict_quantiles(x, taus),
        }
    }
}

/// Runs the full leave-one-region-out detection. Folds run in parallel; the result is
/// sorted by `(region, year)` and does not depend on scheduling.
pub fn run_detection(
    d: &PanelDataset,
    cfg: &MethodConfig,
    taus: TauPair,
) -> Result<Vec<AnomalyRecord>> {
    let levels = [taus.low(), taus.high()];
    let folds: Vec<Vec<AnomalyRecord>> = d
        .regions()
        .par_iter()
        .map(|region| {
            let split = logo_split(d, region)?;
            let fitted = FittedFold::fit(&split.train, cfg, &levels)?;
            split
                .test
                .iter()
                .map(|o| {
                    let pred = fitted.predict(&o.covariates())?;
                    let pi = PredictionInterval::from_predictions(
                        &o.region, o.year, pred[0], pred[1], taus,
                    )?;
                    classify_and_quantify(o.sales_pc, &pi)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<AnomalyRecord> = folds.into_iter().flatten().collect();
    records.sort_by(|a, b| a.region.cmp(&b.region).then(a.year.cmp(&b.year)));
    Ok(records)
}

/// Flat row used for the CSV and JSON record files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub region: String,
    pub year: i32,
    pub observed: f64,
    pub lower: f64,
    pub upper: f64,
    pub tau_low: f64,
    pub tau_high: f64,
    pub class: AnomalyClass,
    pub uar: f64,
    pub lar: f64,
    pub crossing_repaired: bool,
}

impl From<&AnomalyRecord> for RecordRow {
    fn from(r: &AnomalyRecord) -> Self {
        RecordRow {
            region: r.region.clone(),
            year: r.year,
            observed: r.observed,
            lower: r.interval.lower,
            upper: r.interval.upper,
            tau_low: r.interval.taus.low().value(),
            tau_high: r.interval.taus.high().value(),
            class: r.class,
            uar: r.uar,
            lar: r.lar,
            crossing_repaired: r.interval.crossing_repaired,
        }
    }
}

impl TryFrom<RecordRow> for AnomalyRecord {
    type Error = Error;
    fn try_from(row: RecordRow) -> Result<Self> {
        let interval = PredictionInterval {
            region: row.region.clone(),
            year: row.year,
            lower: row.lower,
            upper: row.upper,
            taus: TauPair::new(row.tau_low, row.tau_high)?,
            crossing_repaired: row.crossing_repaired,
        };
        if row.lower > row.upper {
            return Err(Error::invalid(format!(
                "record ({}, {}) has lower > upper",
                row.region, row.year
            )));
        }
        Ok(AnomalyRecord {
            region: row.region,
            year: row.year,
            observed: row.observed,
            interval,
            class: row.class,
            uar: row.uar,
            lar: row.lar,
        })
    }
}
